#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pcaps/dataset.hpp"
#include "pcaps/latent_ops.hpp"
#include "pcaps/model.hpp"
#include "pcaps/partseg.hpp"
#include "pcaps/trainer.hpp"

namespace pcaps {

/// Every tunable of a run. The text form is one "key = value" per line;
/// '#' starts a comment, lists are comma separated, and unknown or repeated
/// keys are errors.
struct RunConfig {
  std::uint64_t seed = 0;
  bool deterministic = false;
  int threads = 1;
  ModelConfig model;
  TrainConfig train;
  std::uint64_t eval_grid_seed = 0;
  PartNetConfig partnet;
  std::size_t filter_k = 9;
  ClassifierConfig classifier;
  std::size_t interpolation_steps = 5;
  DataConfig data;
  std::filesystem::path data_dir = "data";
  std::filesystem::path checkpoint_dir = "checkpoints";

  struct KeyInfo {
    std::string key;
    std::string description;
  };
  /// Every key in file order.
  static const std::vector<KeyInfo>& keys();

  /// Throws InvalidArgument naming the key on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Errors name the source and line.
  static RunConfig parse(const std::string& text, const std::string& source = "<config>");
  static RunConfig load(const std::filesystem::path& path);
  /// Every key with its current value; parse(to_text()) round trips.
  std::string to_text() const;

  /// Cross-field checks: model, train, partnet, and classifier validation.
  void validate() const;

  /// Training settings with run-level seed, threads, and determinism applied.
  TrainConfig train_config() const;

  /// Keys needed to rebuild the model from a checkpoint (model keys and seed).
  std::map<std::string, std::string> model_metadata() const;
  /// model_metadata plus the partnet keys.
  std::map<std::string, std::string> partnet_metadata() const;
  /// Applies the model and partnet keys found in checkpoint metadata.
  void apply_metadata(const std::map<std::string, std::string>& metadata);
};

}  // namespace pcaps
