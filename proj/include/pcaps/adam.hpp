#pragma once

#include "pcaps/parameter_store.hpp"

namespace pcaps {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// One bias-corrected Adam update of every trainable entry; increments the
/// store's step counter. Throws NonFiniteError on a non-finite gradient.
void adam_step(ParameterStore& store, const AdamConfig& cfg);

}  // namespace pcaps
