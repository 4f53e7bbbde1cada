#include "pcaps/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pcaps/error.hpp"
#include "pcaps/ops.hpp"
#include "pcaps/parameter_store.hpp"
#include "pcaps/random.hpp"
#include "pcaps/routing.hpp"

namespace pcaps {

namespace {
std::string mlp_name(std::size_t i) { return "encoder.mlp" + std::to_string(i); }
constexpr const char* kBranches = "encoder.branches";
}  // namespace

void EncoderConfig::validate() const {
  if (n_points == 0 || point_dim == 0 || branch_count == 0 || branch_width == 0) {
    throw InvalidArgument("encoder: sizes must be positive");
  }
  if (mlp_widths.size() < 2 || mlp_widths.front() != point_dim) {
    throw InvalidArgument("encoder: mlp_widths must start at point_dim and have at least two entries");
  }
  for (auto w : mlp_widths)
    if (w == 0) throw InvalidArgument("encoder: mlp widths must be positive");
  if (point_dim != 3) throw InvalidArgument("encoder: only 3-D points are supported");
}

void add_encoder_parameters(ParameterStore& store, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  for (std::size_t i = 0; i + 1 < cfg.mlp_widths.size(); ++i) {
    store.add_glorot(mlp_name(i) + ".weight", cfg.mlp_widths[i], cfg.mlp_widths[i + 1], rng);
    store.add(mlp_name(i) + ".bias", Tensor({cfg.mlp_widths[i + 1]}));
    add_batchnorm_parameters(store, mlp_name(i) + ".bn", cfg.mlp_widths[i + 1]);
  }
  // Channel k * S_c + i belongs to branch k; each branch is its own
  // feat -> S_c layer and is initialized as one.
  const std::size_t feat = cfg.mlp_widths.back();
  const std::size_t channels = cfg.branch_count * cfg.branch_width;
  const double a = std::sqrt(6.0 / static_cast<double>(feat + cfg.branch_width));
  Tensor w({feat, channels});
  for (std::size_t k = 0; k < cfg.branch_count; ++k)
    for (std::size_t f = 0; f < feat; ++f)
      for (std::size_t i = 0; i < cfg.branch_width; ++i)
        w.at(f, k * cfg.branch_width + i) = rng.uniform(-a, a);
  store.add(std::string(kBranches) + ".weight", std::move(w));
  store.add(std::string(kBranches) + ".bias", Tensor({channels}));
  add_batchnorm_parameters(store, std::string(kBranches) + ".bn", channels);
}

std::vector<std::size_t> canonical_point_order(std::span<const Point3> points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });
  return order;
}

Var encode_primary(Tape& tape, std::span<const PointCloud> clouds, const EncoderConfig& cfg,
                   ParameterStore& store, const ForwardOptions& fwd) {
  cfg.validate();
  if (clouds.empty()) throw InvalidArgument("encode_primary: empty batch");
  const std::size_t n = cfg.n_points;
  Tensor input({clouds.size() * n, 3});
  for (std::size_t b = 0; b < clouds.size(); ++b) {
    const PointCloud& c = clouds[b];
    if (c.size() != n) {
      throw ShapeError("encode_primary: cloud " + std::to_string(b) + " has " + std::to_string(c.size()) +
                       " points, expected " + std::to_string(n));
    }
    c.validate();
    const auto order = canonical_point_order(c.points);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < 3; ++d) input.at(b * n + i, d) = c.points[order[i]][d];
  }
  Var h = tape.constant(std::move(input));
  for (std::size_t i = 0; i + 1 < cfg.mlp_widths.size(); ++i) {
    const std::string name = mlp_name(i);
    h = ops::add(ops::matmul(h, tape.parameter(store, name + ".weight")),
                 tape.parameter(store, name + ".bias"));
    h = ops::relu(ops::batchnorm(h, store, {name + ".bn", fwd.bn_momentum, fwd.bn_epsilon, fwd.bn_mode}));
  }
  const std::string br = kBranches;
  Var pooled = ops::pooled_linear_bn_relu(
      h, tape.parameter(store, br + ".weight"), tape.parameter(store, br + ".bias"), store,
      {br + ".bn", fwd.bn_momentum, fwd.bn_epsilon, fwd.bn_mode}, n);
  // (B x K*S_c) -> per shape (K x S_c) -> transpose to (S_c x K).
  const std::size_t k = cfg.branch_count, sc = cfg.branch_width;
  Var by_branch = ops::reshape(pooled, {clouds.size() * k, sc});
  std::vector<Var> shapes;
  shapes.reserve(clouds.size());
  for (std::size_t b = 0; b < clouds.size(); ++b) {
    shapes.push_back(ops::transpose(ops::slice_rows(by_branch, b * k, k)));
  }
  return clouds.size() == 1 ? shapes[0] : ops::concat(shapes, 0);
}

PrimaryCapsules encode_primary(const PointCloud& cloud, const EncoderConfig& cfg, ParameterStore& store,
                               const ForwardOptions& fwd, const TapeOptions& tape_options) {
  Tape tape(tape_options);
  return {encode_primary(tape, std::span<const PointCloud>(&cloud, 1), cfg, store, fwd).value()};
}

LatentCapsules encode(const PointCloud& cloud, const EncoderConfig& cfg, ParameterStore& store,
                      const RoutingConfig& routing, const ForwardOptions& fwd,
                      const TapeOptions& tape_options) {
  Tape tape(tape_options);
  Var ppc = encode_primary(tape, std::span<const PointCloud>(&cloud, 1), cfg, store, fwd);
  return {route_capsules(tape, ppc, 1, routing, store, fwd).value()};
}

}  // namespace pcaps
