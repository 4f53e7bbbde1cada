#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pcaps::cli {

/// Exit codes of run().
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one verb. `args` excludes the program name. Results go to `out`;
/// a failure prints a single "error: <kind>: <message>" line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace pcaps::cli
