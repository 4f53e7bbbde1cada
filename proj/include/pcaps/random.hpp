#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace pcaps {

/// Derives an independent stream seed from a run seed and a list of tags.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

/// Seeded generator with platform-independent draws.
///
/// std::mt19937_64 output is fixed by the standard; the distribution mappings
/// below are written out so sampled values do not depend on the C++ library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace pcaps
