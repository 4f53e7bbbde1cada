#include "pcaps/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "pcaps/error.hpp"

namespace pcaps {

namespace {

TapeOptions check_tape_options() {
  TapeOptions o;
  o.checked = true;
  o.search = SearchPrecision::kFloat64;
  o.track_branches = true;
  o.update_running_stats = false;
  return o;
}

struct Eval {
  double value;
  std::uint64_t signature;
};

Eval evaluate(GradCheckCase& c) {
  Tape tape(check_tape_options());
  Var loss = c.loss(tape, c.store);
  return {loss.value().item(), tape.branch_signature()};
}

}  // namespace

GradCheckResult check_gradients(GradCheckCase& c, const GradCheckOptions& options) {
  GradCheckResult result;
  result.name = c.name;
  c.store.zero_grad();
  std::uint64_t base_signature;
  {
    Tape tape(check_tape_options());
    Var loss = c.loss(tape, c.store);
    if (loss.value().size() != 1) throw ShapeError("gradcheck '" + c.name + "': loss is not scalar");
    base_signature = tape.branch_signature();
    tape.backward(loss);
  }
  for (auto& [name, entry] : c.store) {
    if (!entry.trainable) continue;
    const Tensor analytic = entry.grad;
    const std::size_t n = entry.value.size();
    const std::size_t stride = std::max<std::size_t>(1, n / options.max_coordinates_per_entry);
    for (std::size_t i = 0; i < n; i += stride) {
      const double x0 = entry.value[i];
      entry.value[i] = x0 + options.step;
      const Eval plus = evaluate(c);
      entry.value[i] = x0 - options.step;
      const Eval minus = evaluate(c);
      entry.value[i] = x0;
      if (plus.signature != base_signature || minus.signature != base_signature) {
        ++result.skipped;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * options.step);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      result.max_error = std::max(result.max_error, std::abs(a - numeric) / denom);
      ++result.checked;
    }
  }
  const double total = static_cast<double>(result.checked + result.skipped);
  result.passed = result.checked > 0 && result.max_error <= options.tolerance &&
                  static_cast<double>(result.skipped) <= options.max_skipped_fraction * total;
  return result;
}

}  // namespace pcaps
