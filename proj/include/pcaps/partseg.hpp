#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pcaps/model.hpp"

namespace pcaps {

class ParameterStore;
class Rng;

/// Part index of every latent capsule of one shape.
struct CapsuleLabeling {
  std::vector<std::size_t> labels;
  std::size_t part_count = 0;

  void validate() const;
};

struct PartNetConfig {
  std::size_t category_count = 1;
  std::size_t part_count = 2;
  // Empty: one shared linear layer. Otherwise ReLU hidden layers of these widths.
  std::vector<std::size_t> hidden_widths;
  double learning_rate = 0.01;
  std::size_t epochs = 200;

  void validate() const;
};

/// Most frequent label; ties go to the lowest label.
std::size_t label_mode(std::span<const std::size_t> labels);

/// Label of the nearest point of `labeled` for each row of an (n x 3) tensor.
std::vector<std::size_t> transfer_labels(const PointCloud& labeled, const Tensor& points);

/// Decodes each capsule's patch, gives every patch point the label of its
/// nearest ground-truth point, and labels the capsule by the mode.
/// part_count 0 means one more than the largest ground-truth label.
CapsuleLabeling gt_capsule_labels(const LatentCapsules& latent, const ModelConfig& model, ParameterStore& store,
                                  const PatchGrid& grid, const PointCloud& gt, std::size_t part_count = 0);

std::vector<double> one_hot(std::size_t index, std::size_t count);

/// Registers `partnet.layer<i>.weight` / `.bias`.
void add_partnet_parameters(ParameterStore& store, const PartNetConfig& cfg, std::size_t latent_dim, Rng& rng);

/// Logits of each capsule row concatenated with the category one-hot.
Var partnet_logits(Tape& tape, Var latent, std::span<const double> category_onehot, const PartNetConfig& cfg,
                   ParameterStore& store);

/// (latent_count x part_count) part probabilities; rows sum to 1.
Tensor partnet_forward(const LatentCapsules& latent, std::span<const double> category_onehot,
                       const PartNetConfig& cfg, ParameterStore& store);

/// Argmax part of each capsule; ties go to the lowest part.
std::vector<std::size_t> predict_capsule_parts(const LatentCapsules& latent, std::span<const double> category_onehot,
                                               const PartNetConfig& cfg, ParameterStore& store);

struct PartNetSample {
  LatentCapsules latent;
  std::size_t category = 0;
  CapsuleLabeling labeling;
};

struct PartNetReport {
  std::vector<double> epoch_losses;
  // Capsule-label accuracy of the predictions the loss was computed from.
  std::vector<double> epoch_accuracy;
};

/// Full-batch Adam on the mean capsule cross-entropy. `store` holds the
/// partnet parameters only; the auto-encoder stays untouched.
PartNetReport train_partnet(std::span<const PartNetSample> data, const PartNetConfig& cfg, ParameterStore& store);

/// Eval-mode decode whose points inherit their capsule's predicted part.
PointCloud segment_points(const LatentCapsules& latent, std::span<const double> category_onehot,
                          const PatchGrid& grid, const ModelConfig& model, ParameterStore& model_store,
                          const PartNetConfig& partnet, ParameterStore& partnet_store);

/// Replaces each label by the mode over its k nearest points, itself
/// included. A tied mode keeps the original label.
PointCloud mode_filter(const PointCloud& cloud, std::size_t k = 9);

}  // namespace pcaps
