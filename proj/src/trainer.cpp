#include "pcaps/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "pcaps/checkpoint.hpp"
#include "pcaps/error.hpp"
#include "pcaps/metrics.hpp"
#include "pcaps/parameter_store.hpp"
#include "pcaps/random.hpp"

namespace pcaps {

namespace {

constexpr std::uint64_t kShuffleTag = 11;
constexpr std::uint64_t kGridTag = 12;

std::vector<std::size_t> epoch_order(std::size_t n, const TrainConfig& cfg, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (cfg.shuffle) {
    Rng rng(derive_seed(cfg.seed, {kShuffleTag, epoch}));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }
  return order;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  }
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

std::map<std::string, std::string> with_epoch(const TrainConfig& cfg, std::size_t epoch) {
  auto meta = cfg.checkpoint_metadata;
  meta["epoch"] = std::to_string(epoch);
  return meta;
}

}  // namespace

void TrainConfig::validate() const {
  adam.validate();
  if (batch_size < 2) throw InvalidArgument("train: batch_size must be at least 2 (batchnorm)");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw InvalidArgument("train: lr_decay must be in (0, 1]");
  if (threads < 1) throw InvalidArgument("train: threads must be at least 1");
  if (checkpoint_every > 0 && checkpoint_dir.empty()) {
    throw InvalidArgument("train: checkpoint_every needs a checkpoint directory");
  }
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t shapes, const TrainConfig& cfg, std::size_t epoch) {
  return make_batches(epoch_order(shapes, cfg, epoch), cfg.batch_size);
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t epoch) {
  char name[40];
  std::snprintf(name, sizeof(name), "epoch_%05zu.pcaps", epoch);
  return dir / name;
}

TrainReport train_ae(std::span<const PointCloud> data, const ModelConfig& model, const TrainConfig& cfg,
                     ParameterStore& store, std::size_t start_epoch, std::ostream* log) {
  model.validate();
  cfg.validate();
  if (data.size() < 2) throw InvalidArgument("train: need at least 2 shapes, got " + std::to_string(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].size() != model.encoder.n_points) {
      throw ShapeError("train: shape " + std::to_string(i) + " has " + std::to_string(data[i].size()) +
                       " points, expected " + std::to_string(model.encoder.n_points));
    }
  }
  if (start_epoch > cfg.epochs) throw InvalidArgument("train: start epoch beyond the epoch budget");
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

  TapeOptions tape_options;
  tape_options.search = cfg.search;
  tape_options.threads = cfg.deterministic ? 1 : cfg.threads;

  TrainReport report;
  report.start_epoch = start_epoch;
  const auto start = std::chrono::steady_clock::now();
  const std::size_t caps = model.routing.latent_count;
  for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    AdamConfig adam = cfg.adam;
    adam.learning_rate *= std::pow(cfg.lr_decay, static_cast<double>(epoch));
    const auto batches = epoch_batches(data.size(), cfg, epoch);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<PointCloud> clouds;
      std::vector<PatchGrid> grids;
      for (std::size_t slot = 0; slot < batches[b].size(); ++slot) {
        clouds.push_back(data[batches[b][slot]]);
        const std::uint64_t grid_seed = model.decoder.grid_mode == GridMode::kFixedSeed
                                            ? model.decoder.grid_seed
                                            : derive_seed(cfg.seed, {kGridTag, epoch, b, slot});
        grids.push_back(sample_grid(model.decoder, caps, grid_seed));
      }
      store.zero_grad();
      Tape tape(tape_options);
      const auto out = forward_autoencoder(tape, clouds, grids, model, store, BnMode::kTrain);
      Var loss = reconstruction_loss(tape, out, clouds, model, cfg.chamfer);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NonFiniteError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b));
      }
      tape.backward(loss);
      adam_step(store, adam);
      epoch_loss += value;
    }
    epoch_loss /= static_cast<double>(batches.size());
    report.epoch_losses.push_back(epoch_loss);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log) *log << "epoch " << epoch << " loss " << epoch_loss << " time " << elapsed << '\n';

    const std::size_t done = epoch + 1;
    if (cfg.eval_every > 0 && done % cfg.eval_every == 0) {
      const EvalResult r = eval_ae(data, model, store, cfg.eval_grid_seed, tape_options);
      report.evals.push_back({done, r.mean.value, r.mean_spread});
      if (log) *log << "eval " << done << " chamfer " << r.mean.value << " spread " << r.mean_spread << '\n';
    }
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) {
      const auto path = checkpoint_path(cfg.checkpoint_dir, done);
      save_checkpoint(store, with_epoch(cfg, done), path);
      report.checkpoints.push_back(path);
    }
  }
  if (!cfg.checkpoint_dir.empty()) {
    report.final_checkpoint = cfg.checkpoint_dir / "final.pcaps";
    save_checkpoint(store, with_epoch(cfg, cfg.epochs), report.final_checkpoint);
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

EvalResult eval_ae(std::span<const PointCloud> data, const ModelConfig& model, ParameterStore& store,
                   std::uint64_t grid_seed, const TapeOptions& tape_options) {
  if (data.empty()) throw InvalidArgument("eval: empty dataset");
  const PatchGrid grid = sample_grid(model.decoder, model.routing.latent_count, grid_seed);
  EvalResult result;
  result.capsule_spread.assign(model.routing.latent_count, 0.0);
  for (const auto& cloud : data) {
    const LatentCapsules latent = encode_latent(cloud, model, store, tape_options);
    const Reconstruction recon = reconstruct(latent, grid, model, store, tape_options);
    const PointCloud points = PointCloud::from_tensor(recon.points);
    const ChamferResult c = chamfer_fast(cloud.points, points.points);
    result.per_shape.push_back(c.value);
    result.mean.value += c.value;
    result.mean.term_x_to_y += c.term_x_to_y;
    result.mean.term_y_to_x += c.term_y_to_x;
    const auto spread = capsule_spread(recon);
    for (std::size_t k = 0; k < spread.size(); ++k) result.capsule_spread[k] += spread[k];
  }
  const double n = static_cast<double>(data.size());
  result.mean.value /= n;
  result.mean.term_x_to_y /= n;
  result.mean.term_y_to_x /= n;
  result.mean_x1000 = 1000.0 * result.mean.value;
  for (auto& s : result.capsule_spread) s /= n;
  result.mean_spread = mean_of(result.capsule_spread);
  return result;
}

std::vector<Reconstruction> specialization_timeline(const PointCloud& cloud,
                                                    std::span<const std::filesystem::path> snapshots,
                                                    std::span<const std::size_t> capsules, const ModelConfig& model,
                                                    std::uint64_t grid_seed) {
  if (snapshots.empty()) throw InvalidArgument("timeline: no snapshots");
  if (capsules.empty()) throw InvalidArgument("timeline: no capsules selected");
  const PatchGrid grid = sample_grid(model.decoder, model.routing.latent_count, grid_seed);
  std::vector<Reconstruction> out;
  for (const auto& path : snapshots) {
    if (!std::filesystem::exists(path)) throw IoError("timeline: missing snapshot " + path.string());
    ParameterStore store;
    init_model_parameters(store, model, 0);
    restore_into(store, load_checkpoint(path).store);
    const LatentCapsules latent = encode_latent(cloud, model, store);
    std::vector<Tensor> parts;
    Reconstruction merged;
    for (std::size_t k : capsules) {
      Reconstruction one = decode_single_capsule(latent, k, grid, model.decoder, store, model.forward(BnMode::kEval));
      parts.push_back(std::move(one.points));
      merged.attribution.insert(merged.attribution.end(), one.attribution.begin(), one.attribution.end());
    }
    merged.points = concat_rows(parts);
    out.push_back(std::move(merged));
  }
  return out;
}

}  // namespace pcaps
