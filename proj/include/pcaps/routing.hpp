#pragma once

#include <cstddef>
#include <vector>

#include "pcaps/encoder.hpp"
#include "pcaps/tape.hpp"

namespace pcaps {

class ParameterStore;
class Rng;

enum class RoutingMode {
  kDynamic,
  // Replaces routing with L point-wise branches max-pooled over the primary
  // capsules.
  kConvAblation,
};

struct RoutingConfig {
  std::size_t latent_count = 64;
  std::size_t latent_dim = 64;
  std::size_t iterations = 3;
  RoutingMode mode = RoutingMode::kDynamic;

  void validate() const;
};

/// L x D latent capsules of one shape.
struct LatentCapsules {
  Tensor capsules;
};

/// Trace of one dynamic-routing pass over a single shape. `logits[t]` and
/// `couplings[t]` are the values used in iteration t.
struct RoutingState {
  Tensor predictions;  // S_c x (L * D), block j holds the votes for capsule j
  std::vector<Tensor> logits;
  std::vector<Tensor> couplings;
  Tensor outputs;  // L x D
};

/// Scales every row s to (|s|^2 / (1 + |s|^2)) s / |s|; zero rows stay zero.
Tensor squash(const Tensor& rows);

void add_routing_parameters(ParameterStore& store, const RoutingConfig& cfg, std::size_t primary_dim, Rng& rng);

namespace ops {
/// Differentiable row-wise squash. The gradient at a zero row is zero.
Var squash(Var rows);
}  // namespace ops

/// Dynamic routing of (batch * S_c) x K primary capsules to (batch * L) x D
/// latent capsules. Rows of each shape are put in lexicographic order first,
/// so the result does not depend on the order of the primary capsules.
/// Throws NonFiniteError naming the iteration if the votes stop being finite.
Var route(Tape& tape, Var primary, std::size_t batch, const RoutingConfig& cfg, ParameterStore& store,
          std::vector<RoutingState>* trace = nullptr);

/// Routing-free baseline with the same output shape.
Var conv_ablation(Tape& tape, Var primary, std::size_t batch, const RoutingConfig& cfg,
                  ParameterStore& store, const ForwardOptions& fwd);

/// Dispatches on cfg.mode.
Var route_capsules(Tape& tape, Var primary, std::size_t batch, const RoutingConfig& cfg,
                   ParameterStore& store, const ForwardOptions& fwd);

LatentCapsules route(const PrimaryCapsules& primary, const RoutingConfig& cfg, ParameterStore& store,
                     RoutingState* trace = nullptr, const TapeOptions& tape_options = {});

}  // namespace pcaps
