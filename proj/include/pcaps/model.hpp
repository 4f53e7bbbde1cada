#pragma once

#include <cstdint>
#include <span>

#include "pcaps/chamfer.hpp"
#include "pcaps/decoder.hpp"
#include "pcaps/encoder.hpp"
#include "pcaps/routing.hpp"

namespace pcaps {

class ParameterStore;

struct ModelConfig {
  EncoderConfig encoder;
  RoutingConfig routing;
  DecoderConfig decoder;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;

  void validate() const;
  ForwardOptions forward(BnMode mode) const { return {mode, bn_momentum, bn_epsilon}; }
  /// Points produced per shape: latent_count * replicas.
  std::size_t output_points() const { return routing.latent_count * decoder.replicas; }

  /// 16 points, 4 latent capsules; small enough for finite differences.
  static ModelConfig miniature();
};

/// Registers and initializes every encoder, routing and decoder parameter.
void init_model_parameters(ParameterStore& store, const ModelConfig& cfg, std::uint64_t seed);

struct AutoencoderOutput {
  Var primary;  // (B * S_c) x K
  Var latent;   // (B * L) x D
  Var points;   // (B * L * m) x 3
};

AutoencoderOutput forward_autoencoder(Tape& tape, std::span<const PointCloud> clouds,
                                      std::span<const PatchGrid> grids, const ModelConfig& cfg,
                                      ParameterStore& store, BnMode mode);

/// Mean over the batch of the Chamfer distance between each input cloud and
/// its reconstruction.
Var reconstruction_loss(Tape& tape, const AutoencoderOutput& out, std::span<const PointCloud> clouds,
                        const ModelConfig& cfg, const ChamferOptions& options = {});

/// Eval-mode latent capsules of one cloud.
LatentCapsules encode_latent(const PointCloud& cloud, const ModelConfig& cfg, ParameterStore& store,
                             const TapeOptions& tape_options = {});

/// Eval-mode reconstruction of one latent code.
Reconstruction reconstruct(const LatentCapsules& latent, const PatchGrid& grid, const ModelConfig& cfg,
                           ParameterStore& store, const TapeOptions& tape_options = {});

}  // namespace pcaps
