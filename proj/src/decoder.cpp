#include "pcaps/decoder.hpp"

#include <string>

#include "pcaps/error.hpp"
#include "pcaps/ops.hpp"
#include "pcaps/parameter_store.hpp"
#include "pcaps/random.hpp"

namespace pcaps {

namespace {

std::string mlp_name(std::size_t i) { return "decoder.mlp" + std::to_string(i); }

Reconstruction to_reconstruction(const Tensor& points, std::size_t replicas, std::size_t latent_count) {
  Reconstruction r{points, std::vector<std::size_t>(points.rows())};
  for (std::size_t i = 0; i < points.rows(); ++i) r.attribution[i] = capsule_of_row(i, replicas, latent_count);
  return r;
}

}  // namespace

void DecoderConfig::validate(std::size_t latent_dim) const {
  if (replicas == 0) throw InvalidArgument("decoder: replicas must be positive");
  if (mlp_widths.size() < 2) throw InvalidArgument("decoder: mlp_widths needs at least two entries");
  if (mlp_widths.front() != latent_dim + 2) {
    throw InvalidArgument("decoder: first width must be latent_dim + 2 = " + std::to_string(latent_dim + 2) +
                          ", got " + std::to_string(mlp_widths.front()));
  }
  if (mlp_widths.back() != 3) throw InvalidArgument("decoder: last width must be 3");
  for (auto w : mlp_widths)
    if (w == 0) throw InvalidArgument("decoder: widths must be positive");
}

PointCloud attributed_cloud(const Reconstruction& recon) {
  PointCloud cloud = PointCloud::from_tensor(recon.points);
  cloud.labels = recon.attribution;
  return cloud;
}

PatchGrid sample_grid(const DecoderConfig& cfg, std::size_t latent_count, std::uint64_t seed) {
  if (latent_count == 0 || cfg.replicas == 0) throw InvalidArgument("sample_grid: sizes must be positive");
  Rng rng(seed);
  Tensor coords({latent_count * cfg.replicas, 2});
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = rng.uniform();
  return {std::move(coords)};
}

void add_decoder_parameters(ParameterStore& store, const DecoderConfig& cfg, Rng& rng) {
  const auto& w = cfg.mlp_widths;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    store.add_glorot(mlp_name(i) + ".weight", w[i], w[i + 1], rng);
    store.add(mlp_name(i) + ".bias", Tensor({w[i + 1]}));
    if (i + 2 < w.size()) add_batchnorm_parameters(store, mlp_name(i) + ".bn", w[i + 1]);
  }
}

Var decode(Tape& tape, Var latent, std::size_t batch, std::span<const PatchGrid> grids, const DecoderConfig& cfg,
           ParameterStore& store, const ForwardOptions& fwd) {
  const Tensor& z = latent.value();
  if (z.rank() != 2 || batch == 0 || z.rows() % batch != 0) {
    throw ShapeError("decode: latent " + shape_string(z.shape()) + " does not split into " +
                     std::to_string(batch) + " shapes");
  }
  cfg.validate(z.cols());
  const std::size_t caps = z.rows() / batch, m = cfg.replicas;
  if (grids.size() != 1 && grids.size() != batch) {
    throw InvalidArgument("decode: expected 1 or " + std::to_string(batch) + " grids, got " +
                          std::to_string(grids.size()));
  }
  Tensor coords({batch * caps * m, 2});
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor& g = grids[grids.size() == 1 ? 0 : b].coords;
    if (g.rank() != 2 || g.rows() != caps * m || g.cols() != 2) {
      throw ShapeError("decode: grid " + shape_string(g.shape()) + ", expected [" + std::to_string(caps * m) +
                       "x2]");
    }
    std::copy(g.data(), g.data() + g.size(), coords.data() + b * caps * m * 2);
  }
  std::vector<std::size_t> owner(batch * caps * m);
  for (std::size_t r = 0; r < owner.size(); ++r) owner[r] = r / m;
  const Var parts[] = {ops::gather_rows(latent, owner), tape.constant(std::move(coords))};
  Var h = ops::concat(parts, 1);
  const auto& w = cfg.mlp_widths;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    const std::string name = mlp_name(i);
    h = ops::add(ops::matmul(h, tape.parameter(store, name + ".weight")), tape.parameter(store, name + ".bias"));
    if (i + 2 < w.size()) {
      h = ops::relu(ops::batchnorm(h, store, {name + ".bn", fwd.bn_momentum, fwd.bn_epsilon, fwd.bn_mode}));
    } else {
      h = ops::tanh(h);
    }
  }
  return h;
}

Reconstruction decode(const LatentCapsules& latent, const PatchGrid& grid, const DecoderConfig& cfg,
                      ParameterStore& store, const ForwardOptions& fwd, const TapeOptions& tape_options) {
  Tape tape(tape_options);
  Var out = decode(tape, tape.constant(latent.capsules), 1, std::span<const PatchGrid>(&grid, 1), cfg, store, fwd);
  return to_reconstruction(out.value(), cfg.replicas, latent.capsules.rows());
}

Reconstruction decode_single_capsule(const LatentCapsules& latent, std::size_t index, const PatchGrid& grid,
                                     const DecoderConfig& cfg, ParameterStore& store, const ForwardOptions& fwd,
                                     const TapeOptions& tape_options) {
  const std::size_t caps = latent.capsules.rows(), m = cfg.replicas;
  if (index >= caps) {
    throw InvalidArgument("decode_single_capsule: index " + std::to_string(index) + " out of range for " +
                          std::to_string(caps) + " capsules");
  }
  if (grid.coords.rank() != 2 || grid.coords.rows() != caps * m) {
    throw ShapeError("decode_single_capsule: grid " + shape_string(grid.coords.shape()) + " does not match " +
                     std::to_string(caps) + " capsules");
  }
  Tape tape(tape_options);
  const PatchGrid slice{grid.coords.slice_rows(index * m, m)};
  Var out = decode(tape, tape.constant(latent.capsules.slice_rows(index, 1)), 1,
                   std::span<const PatchGrid>(&slice, 1), cfg, store, fwd);
  Reconstruction r{out.value(), std::vector<std::size_t>(m, index)};
  return r;
}

}  // namespace pcaps
