#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "pcaps/ops.hpp"
#include "pcaps/random.hpp"
#include "pcaps/tensor.hpp"

namespace pcaps::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Reduces any tensor to a scalar through fixed random weights, so gradient
// checks see every output element with a distinct coefficient.
inline Var project(Var y, std::uint64_t seed = 99) {
  const std::size_t n = y.value().size();
  Var flat = ops::reshape(y, {1, n});
  Var w = y.tape().constant(random_tensor({n, 1}, seed, 0.5, 1.5));
  return ops::sum(ops::matmul(flat, w));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("pcaps_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace pcaps::testing
