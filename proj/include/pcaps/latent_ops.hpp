#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pcaps/partseg.hpp"

namespace pcaps {

/// Capsule pairs moved between two shapes: source capsule indices[k] is
/// paired with target capsule target_indices[k]. Empty target_indices pairs
/// every index with itself.
struct CapsuleSelection {
  std::vector<std::size_t> indices;
  std::vector<std::size_t> target_indices;
  std::size_t source_shape = 0;
  std::size_t target_shape = 0;

  std::size_t target_of(std::size_t k) const { return target_indices.empty() ? indices[k] : target_indices[k]; }
  /// Non-empty, unique, and in range on both sides.
  void validate(std::size_t latent_count) const;
};

/// Capsules labeled `part` in both labelings.
CapsuleSelection match_part_capsules(const CapsuleLabeling& a, const CapsuleLabeling& b, std::size_t part);

/// Pairs each listed source capsule with a distinct target capsule, greedily
/// taking the highest remaining cosine similarity (ties: lowest source, then
/// lowest target index). For shapes without part labels.
CapsuleSelection match_capsules_by_cosine(const LatentCapsules& src, const LatentCapsules& tgt,
                                          std::span<const std::size_t> source_indices);

/// Selected capsules become (1 - t) src + t tgt; all others are copied from src.
LatentCapsules interpolate_part(const LatentCapsules& src, const LatentCapsules& tgt, const CapsuleSelection& sel,
                                double t);

/// interpolate_part at t = 1.
LatentCapsules replace_part(const LatentCapsules& src, const LatentCapsules& tgt, const CapsuleSelection& sel);

/// Latents at t = i / (steps - 1), i = 0 .. steps - 1.
std::vector<LatentCapsules> interpolation_sequence(const LatentCapsules& src, const LatentCapsules& tgt,
                                                   const CapsuleSelection& sel, std::size_t steps);

/// Row-major flattening.
std::vector<double> flatten_latent(const LatentCapsules& latent);
LatentCapsules unflatten_latent(std::span<const double> values, std::size_t latent_count, std::size_t latent_dim);

struct ClassifierConfig {
  // L2 weight of 0.5 * lambda * |W|^2.
  double regularization = 1e-4;
  double learning_rate = 0.5;
  std::size_t iterations = 500;

  void validate() const;
};

/// One-vs-rest linear scores; classify returns the argmax, ties to the
/// lowest class.
struct LinearClassifier {
  Tensor weights;  // classes x features
  std::vector<double> bias;

  std::size_t class_count() const { return bias.size(); }
  std::vector<double> scores(std::span<const double> feature) const;
  std::size_t classify(std::span<const double> feature) const;
};

/// All-zero classifier.
LinearClassifier zero_classifier(std::size_t classes, std::size_t features);

/// Regularized one-vs-rest hinge objective averaged over the samples.
double hinge_objective(const LinearClassifier& clf, std::span<const std::vector<double>> features,
                       std::span<const std::size_t> labels, double regularization);

struct ClassifierReport {
  // Objective after each accepted step, starting with the initial value.
  std::vector<double> objective;
  std::vector<double> step_sizes;
};

/// Full-batch subgradient descent on hinge_objective. A step that would
/// raise the objective is retried at half the step size, so step sizes never
/// grow and the objective never rises.
LinearClassifier train_linear_classifier(std::span<const std::vector<double>> features,
                                         std::span<const std::size_t> labels, const ClassifierConfig& cfg,
                                         ClassifierReport* report = nullptr);

double classifier_accuracy(const LinearClassifier& clf, std::span<const std::vector<double>> features,
                           std::span<const std::size_t> labels);

}  // namespace pcaps
