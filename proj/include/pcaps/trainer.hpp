#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pcaps/adam.hpp"
#include "pcaps/chamfer.hpp"
#include "pcaps/model.hpp"

namespace pcaps {

class ParameterStore;

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 8;
  AdamConfig adam;
  // Single-threaded, fixed-order execution.
  bool deterministic = false;
  int threads = 1;
  SearchPrecision search = SearchPrecision::kFloat32;
  ChamferOptions chamfer;
  std::uint64_t seed = 0;
  bool shuffle = true;
  // Learning rate multiplier applied once per epoch; 1 keeps it constant.
  double lr_decay = 1.0;
  // Checkpoint every n epochs into checkpoint_dir (0 disables).
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  // Evaluate the training set every n epochs (0 disables).
  std::size_t eval_every = 0;
  std::uint64_t eval_grid_seed = 0;
  // Written into every checkpoint next to the epoch.
  std::map<std::string, std::string> checkpoint_metadata;

  void validate() const;
};

struct EvalResult {
  ChamferResult mean;
  // mean.value scaled by 1000.
  double mean_x1000 = 0.0;
  std::vector<double> per_shape;
  // Spread of each capsule, averaged over shapes.
  std::vector<double> capsule_spread;
  double mean_spread = 0.0;
};

struct EvalRecord {
  std::size_t epoch = 0;
  double chamfer = 0.0;
  double mean_spread = 0.0;
};

struct TrainReport {
  std::size_t start_epoch = 0;
  // Mean batch loss of each epoch trained, in order.
  std::vector<double> epoch_losses;
  double wall_seconds = 0.0;
  std::vector<EvalRecord> evals;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path final_checkpoint;
};

/// Shape indices of each batch of an epoch: consecutive chunks of the
/// epoch's order, with a trailing single shape merged into the previous
/// chunk (batchnorm needs two rows).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t shapes, const TrainConfig& cfg, std::size_t epoch);

/// Checkpoint written after `epoch` epochs.
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t epoch);

/// Minibatch Adam on the mean per-shape Chamfer distance. Epochs
/// [start_epoch, cfg.epochs) are run; shuffling and grids depend only on the
/// seed, epoch, and batch position, so a run resumed from a checkpoint
/// repeats the uninterrupted run exactly. Logs "epoch <e> loss <l> time <s>"
/// lines to `log` when given.
TrainReport train_ae(std::span<const PointCloud> data, const ModelConfig& model, const TrainConfig& cfg,
                     ParameterStore& store, std::size_t start_epoch = 0, std::ostream* log = nullptr);

/// Eval-mode reconstruction of every shape with one fixed grid.
EvalResult eval_ae(std::span<const PointCloud> data, const ModelConfig& model, ParameterStore& store,
                   std::uint64_t grid_seed, const TapeOptions& tape_options = {});

/// For each snapshot, the union of the given capsules' patches when
/// reconstructing `cloud`. Attribution holds capsule indices.
std::vector<Reconstruction> specialization_timeline(const PointCloud& cloud,
                                                    std::span<const std::filesystem::path> snapshots,
                                                    std::span<const std::size_t> capsules, const ModelConfig& model,
                                                    std::uint64_t grid_seed);

}  // namespace pcaps
