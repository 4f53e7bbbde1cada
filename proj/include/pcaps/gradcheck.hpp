#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pcaps/parameter_store.hpp"
#include "pcaps/tape.hpp"

namespace pcaps {

struct GradCheckOptions {
  double step = 1e-6;
  double tolerance = 1e-4;
  // Denominator floor of the element-wise relative error
  // |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-3;
  // Largest number of coordinates probed per entry; larger entries are
  // subsampled with a fixed stride.
  std::size_t max_coordinates_per_entry = 48;
  // Maximum tolerated fraction of coordinates skipped because a +/- step
  // crossed a relu, max, or nearest-neighbour switch.
  double max_skipped_fraction = 0.25;
};

/// A scalar function of every trainable entry in `store`.
struct GradCheckCase {
  std::string name;
  ParameterStore store{StoragePrecision::kFloat64};
  std::function<Var(Tape&, ParameterStore&)> loss;
};

struct GradCheckResult {
  std::string name;
  double max_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = false;
};

/// Compares tape gradients against central finite differences at 64-bit.
GradCheckResult check_gradients(GradCheckCase& c, const GradCheckOptions& options = {});

/// Every differentiable op on random inputs in [-2, 2], plus routing,
/// squash, Chamfer, batchnorm, the pooled layers, and the full miniature
/// auto-encoder in both routing modes.
std::vector<GradCheckCase> gradient_suite(std::uint64_t seed);

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace pcaps
