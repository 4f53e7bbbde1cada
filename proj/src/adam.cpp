#include "pcaps/adam.hpp"

#include <cmath>

#include "pcaps/error.hpp"

namespace pcaps {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("adam: learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InvalidArgument("adam: beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("adam: beta2 must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw InvalidArgument("adam: epsilon must be positive");
}

void adam_step(ParameterStore& store, const AdamConfig& cfg) {
  cfg.validate();
  for (const auto& [name, e] : store) {
    if (e.trainable && !e.grad.all_finite()) {
      throw NonFiniteError("adam: non-finite gradient for '" + name + "'");
    }
  }
  store.set_step(store.step() + 1);
  const double t = static_cast<double>(store.step());
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, e] : store) {
    if (!e.trainable) continue;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      e.m[i] = store.store(cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g);
      e.v[i] = store.store(cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g);
      const double mhat = e.m[i] / c1;
      const double vhat = e.v[i] / c2;
      e.value[i] = store.store(e.value[i] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
  }
}

}  // namespace pcaps
