#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "pcaps/tape.hpp"

namespace pcaps {

class ParameterStore;

/// Batchnorm over the rows of a (rows x channels) input. Parameters live in
/// the store as `<name>.gamma`, `<name>.beta` (trainable) and
/// `<name>.running_mean`, `<name>.running_var` (frozen).
struct BatchNormState {
  std::string name;
  double momentum = 0.1;
  double epsilon = 1e-5;
  BnMode mode = BnMode::kTrain;
};

/// Registers gamma = 1, beta = 0, running mean 0 and running variance 1.
void add_batchnorm_parameters(ParameterStore& store, const std::string& name, std::size_t channels);

namespace ops {

// Shapes are 2-D (rows x cols) unless noted. Shape violations throw ShapeError
// naming the op and the offending shapes.

Var matmul(Var a, Var b);
/// Elementwise sum of equal shapes, or a 2-D tensor plus a per-column 1-D bias.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);
Var tanh(Var a);
Var square(Var a);
/// Derivative at 0 is taken as 0.
Var sqrt(Var a);
Var softmax(Var a, std::size_t axis);
/// Reduces a 2-D tensor along `axis`. Ties resolve to the lowest index, which
/// alone receives the gradient.
Var max(Var a, std::size_t axis);
Var sum(Var a, std::size_t axis);
Var sum(Var a);
Var mean(Var a);
Var concat(std::span<const Var> parts, std::size_t axis);
Var reshape(Var a, Shape shape);
Var transpose(Var a);
Var gather_rows(Var a, std::span<const std::size_t> rows);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var batchnorm(Var x, ParameterStore& store, const BatchNormState& state);
/// Mean softmax cross-entropy of per-row logits against integer labels.
Var cross_entropy(Var logits, std::span<const std::size_t> labels);

/// Fused point-wise linear layer, batchnorm, ReLU, and max-pool.
///
/// `h` holds stacked segments of `segment_rows` rows each. Every output
/// channel c is relu(bn(h w_c + b_c)) max-pooled over the rows of a segment;
/// the result is (segments x channels). Equivalent to the composition of
/// matmul, add, batchnorm, relu and per-segment max, but never materializes
/// the (rows x channels) activation: the backward pass uses the
/// input covariance instead.
Var pooled_linear_bn_relu(Var h, Var weight, Var bias, ParameterStore& store,
                          const BatchNormState& bn, std::size_t segment_rows);

}  // namespace ops
}  // namespace pcaps
