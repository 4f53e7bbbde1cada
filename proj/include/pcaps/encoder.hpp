#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pcaps/point_cloud.hpp"
#include "pcaps/tape.hpp"

namespace pcaps {

class ParameterStore;
class Rng;
struct RoutingConfig;
struct LatentCapsules;

/// Batchnorm behaviour for one forward pass.
struct ForwardOptions {
  BnMode bn_mode = BnMode::kEval;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
};

struct EncoderConfig {
  std::size_t n_points = 2048;
  std::size_t point_dim = 3;
  // Shared point-wise MLP, starting at point_dim.
  std::vector<std::size_t> mlp_widths{3, 64, 128};
  // K independent point-wise branches of width S_c, each max-pooled.
  std::size_t branch_count = 16;
  std::size_t branch_width = 1024;

  void validate() const;
};

/// S_c capsules of dimension K: capsule i holds the K branch responses at
/// pooled index i.
struct PrimaryCapsules {
  Tensor capsules;
};

void add_encoder_parameters(ParameterStore& store, const EncoderConfig& cfg, Rng& rng);

/// Lexicographic (x, y, z) order of the points. The encoder consumes points in
/// this order, which makes it bit-exactly invariant to input permutations.
std::vector<std::size_t> canonical_point_order(std::span<const Point3> points);

/// Batched primary capsules: (clouds.size() * S_c) x K, shape-major.
Var encode_primary(Tape& tape, std::span<const PointCloud> clouds, const EncoderConfig& cfg,
                   ParameterStore& store, const ForwardOptions& fwd);

PrimaryCapsules encode_primary(const PointCloud& cloud, const EncoderConfig& cfg, ParameterStore& store,
                               const ForwardOptions& fwd = {}, const TapeOptions& tape_options = {});

/// encode_primary followed by routing (or the conv ablation, per cfg.mode).
LatentCapsules encode(const PointCloud& cloud, const EncoderConfig& cfg, ParameterStore& store,
                      const RoutingConfig& routing, const ForwardOptions& fwd = {},
                      const TapeOptions& tape_options = {});

}  // namespace pcaps
