#include "pcaps/cli.hpp"

int main(int argc, char** argv) { return pcaps::cli::run(argc, argv); }
