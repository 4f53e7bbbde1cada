#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pcaps/encoder.hpp"
#include "pcaps/routing.hpp"
#include "pcaps/tape.hpp"

namespace pcaps {

class ParameterStore;
class Rng;

enum class GridMode {
  // A fresh grid for every forward pass.
  kResamplePerForward,
  // One grid derived from grid_seed and reused.
  kFixedSeed,
};

struct DecoderConfig {
  // Grid points per capsule.
  std::size_t replicas = 32;
  // Point-wise MLP from (latent_dim + 2) to 3; tanh on the last layer,
  // batchnorm + ReLU on the others.
  std::vector<std::size_t> mlp_widths{66, 64, 32, 16, 3};
  GridMode grid_mode = GridMode::kResamplePerForward;
  std::uint64_t grid_seed = 0;

  void validate(std::size_t latent_dim) const;
};

/// (L * m) x 2 coordinates in (0, 1)^2; rows [k*m, (k+1)*m) belong to capsule k.
struct PatchGrid {
  Tensor coords;
};

/// Decoded points of one shape. Row r was produced by capsule attribution[r].
struct Reconstruction {
  Tensor points;
  std::vector<std::size_t> attribution;

  std::size_t size() const { return attribution.size(); }
};

/// Decoded points labeled by the capsule that produced them.
PointCloud attributed_cloud(const Reconstruction& recon);

PatchGrid sample_grid(const DecoderConfig& cfg, std::size_t latent_count, std::uint64_t seed);

void add_decoder_parameters(ParameterStore& store, const DecoderConfig& cfg, Rng& rng);

/// Capsule owning decoded row r of a shape with `latent_count` capsules.
inline std::size_t capsule_of_row(std::size_t r, std::size_t replicas, std::size_t latent_count) {
  return (r / replicas) % latent_count;
}

/// Decodes (batch * L) x D latents into (batch * L * m) x 3 points. `grids`
/// holds one grid per shape, or a single grid shared by all of them.
Var decode(Tape& tape, Var latent, std::size_t batch, std::span<const PatchGrid> grids, const DecoderConfig& cfg,
           ParameterStore& store, const ForwardOptions& fwd);

Reconstruction decode(const LatentCapsules& latent, const PatchGrid& grid, const DecoderConfig& cfg,
                      ParameterStore& store, const ForwardOptions& fwd = {}, const TapeOptions& tape_options = {});

/// Points of capsule `index` alone, using its rows of `grid`. With eval-mode
/// batchnorm this equals the matching rows of the full decode bit for bit.
Reconstruction decode_single_capsule(const LatentCapsules& latent, std::size_t index, const PatchGrid& grid,
                                     const DecoderConfig& cfg, ParameterStore& store,
                                     const ForwardOptions& fwd = {}, const TapeOptions& tape_options = {});

}  // namespace pcaps
