#include "pcaps/model.hpp"

#include "pcaps/error.hpp"
#include "pcaps/ops.hpp"
#include "pcaps/parameter_store.hpp"
#include "pcaps/random.hpp"

namespace pcaps {

void ModelConfig::validate() const {
  encoder.validate();
  routing.validate();
  decoder.validate(routing.latent_dim);
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw InvalidArgument("model: bn_momentum must be in (0, 1]");
  if (!(bn_epsilon > 0.0)) throw InvalidArgument("model: bn_epsilon must be positive");
}

ModelConfig ModelConfig::miniature() {
  ModelConfig cfg;
  cfg.encoder.n_points = 16;
  cfg.encoder.mlp_widths = {3, 8, 8};
  cfg.encoder.branch_count = 4;
  cfg.encoder.branch_width = 8;
  cfg.routing.latent_count = 4;
  cfg.routing.latent_dim = 4;
  cfg.decoder.replicas = 4;
  cfg.decoder.mlp_widths = {6, 8, 3};
  return cfg;
}

void init_model_parameters(ParameterStore& store, const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng encoder_rng(derive_seed(seed, {1}));
  Rng routing_rng(derive_seed(seed, {2}));
  Rng decoder_rng(derive_seed(seed, {3}));
  add_encoder_parameters(store, cfg.encoder, encoder_rng);
  add_routing_parameters(store, cfg.routing, cfg.encoder.branch_count, routing_rng);
  add_decoder_parameters(store, cfg.decoder, decoder_rng);
}

AutoencoderOutput forward_autoencoder(Tape& tape, std::span<const PointCloud> clouds,
                                      std::span<const PatchGrid> grids, const ModelConfig& cfg,
                                      ParameterStore& store, BnMode mode) {
  const ForwardOptions fwd = cfg.forward(mode);
  AutoencoderOutput out;
  out.primary = encode_primary(tape, clouds, cfg.encoder, store, fwd);
  out.latent = route_capsules(tape, out.primary, clouds.size(), cfg.routing, store, fwd);
  out.points = decode(tape, out.latent, clouds.size(), grids, cfg.decoder, store, fwd);
  return out;
}

Var reconstruction_loss(Tape& tape, const AutoencoderOutput& out, std::span<const PointCloud> clouds,
                        const ModelConfig& cfg, const ChamferOptions& options) {
  if (clouds.empty()) throw InvalidArgument("reconstruction_loss: empty batch");
  const std::size_t per_shape = cfg.output_points();
  std::vector<Var> terms;
  terms.reserve(clouds.size());
  for (std::size_t b = 0; b < clouds.size(); ++b) {
    Var recon = ops::slice_rows(out.points, b * per_shape, per_shape);
    terms.push_back(ops::chamfer(recon, tape.constant(clouds[b].to_tensor()), options));
  }
  Var total = terms[0];
  for (std::size_t b = 1; b < terms.size(); ++b) total = ops::add(total, terms[b]);
  return ops::scale(total, 1.0 / static_cast<double>(clouds.size()));
}

LatentCapsules encode_latent(const PointCloud& cloud, const ModelConfig& cfg, ParameterStore& store,
                             const TapeOptions& tape_options) {
  return encode(cloud, cfg.encoder, store, cfg.routing, cfg.forward(BnMode::kEval), tape_options);
}

Reconstruction reconstruct(const LatentCapsules& latent, const PatchGrid& grid, const ModelConfig& cfg,
                           ParameterStore& store, const TapeOptions& tape_options) {
  return decode(latent, grid, cfg.decoder, store, cfg.forward(BnMode::kEval), tape_options);
}

}  // namespace pcaps
