#include "pcaps/latent_ops.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "pcaps/error.hpp"

namespace pcaps {

namespace {

void check_pair(const LatentCapsules& src, const LatentCapsules& tgt) {
  if (!same_shape(src.capsules, tgt.capsules) || src.capsules.rank() != 2) {
    throw ShapeError("latent ops: shapes " + shape_string(src.capsules.shape()) + " and " +
                     shape_string(tgt.capsules.shape()) + " differ");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

void CapsuleSelection::validate(std::size_t latent_count) const {
  if (indices.empty()) throw EmptySelectionError("capsule selection is empty");
  if (!target_indices.empty() && target_indices.size() != indices.size()) {
    throw InvalidArgument("capsule selection: source and target index counts differ");
  }
  for (const auto* side : {&indices, &target_indices}) {
    std::set<std::size_t> seen;
    for (std::size_t i : *side) {
      if (i >= latent_count) {
        throw InvalidArgument("capsule selection: index " + std::to_string(i) + " out of range " +
                              std::to_string(latent_count));
      }
      if (!seen.insert(i).second) throw InvalidArgument("capsule selection: duplicate index " + std::to_string(i));
    }
  }
}

CapsuleSelection match_part_capsules(const CapsuleLabeling& a, const CapsuleLabeling& b, std::size_t part) {
  if (a.part_count != b.part_count) throw InvalidArgument("match_part_capsules: part vocabularies differ");
  if (a.labels.size() != b.labels.size()) throw ShapeError("match_part_capsules: capsule counts differ");
  if (part >= a.part_count) throw InvalidArgument("match_part_capsules: part " + std::to_string(part) + " out of range");
  CapsuleSelection sel;
  for (std::size_t i = 0; i < a.labels.size(); ++i) {
    if (a.labels[i] == part && b.labels[i] == part) sel.indices.push_back(i);
  }
  if (sel.indices.empty()) {
    throw EmptySelectionError("match_part_capsules: no capsule carries part " + std::to_string(part) + " in both shapes");
  }
  return sel;
}

CapsuleSelection match_capsules_by_cosine(const LatentCapsules& src, const LatentCapsules& tgt,
                                          std::span<const std::size_t> source_indices) {
  check_pair(src, tgt);
  const std::size_t caps = src.capsules.rows();
  CapsuleSelection sel;
  sel.indices.assign(source_indices.begin(), source_indices.end());
  sel.validate(caps);
  auto cosine = [&](std::size_t i, std::size_t j) {
    const auto a = src.capsules.row(i), b = tgt.capsules.row(j);
    const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
    return na > 0.0 && nb > 0.0 ? dot(a, b) / (na * nb) : 0.0;
  };
  struct Pair {
    double cos;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  for (std::size_t i : sel.indices)
    for (std::size_t j = 0; j < caps; ++j) pairs.push_back({cosine(i, j), i, j});
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    if (x.cos != y.cos) return x.cos > y.cos;
    return x.i != y.i ? x.i < y.i : x.j < y.j;
  });
  std::vector<bool> src_used(caps, false), tgt_used(caps, false);
  std::vector<std::size_t> target_of(caps, 0);
  for (const auto& p : pairs) {
    if (src_used[p.i] || tgt_used[p.j]) continue;
    src_used[p.i] = tgt_used[p.j] = true;
    target_of[p.i] = p.j;
  }
  for (std::size_t i : sel.indices) sel.target_indices.push_back(target_of[i]);
  return sel;
}

LatentCapsules interpolate_part(const LatentCapsules& src, const LatentCapsules& tgt, const CapsuleSelection& sel,
                                double t) {
  check_pair(src, tgt);
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("interpolate_part: t = " + std::to_string(t) + " outside [0, 1]");
  sel.validate(src.capsules.rows());
  LatentCapsules out = src;
  for (std::size_t k = 0; k < sel.indices.size(); ++k) {
    const auto a = src.capsules.row(sel.indices[k]);
    const auto b = tgt.capsules.row(sel.target_of(k));
    auto o = out.capsules.row(sel.indices[k]);
    // The endpoints are exact: 1 * a + 0 * b and 0 * a + 1 * b.
    for (std::size_t d = 0; d < o.size(); ++d) o[d] = (1.0 - t) * a[d] + t * b[d];
  }
  return out;
}

LatentCapsules replace_part(const LatentCapsules& src, const LatentCapsules& tgt, const CapsuleSelection& sel) {
  return interpolate_part(src, tgt, sel, 1.0);
}

std::vector<LatentCapsules> interpolation_sequence(const LatentCapsules& src, const LatentCapsules& tgt,
                                                   const CapsuleSelection& sel, std::size_t steps) {
  if (steps < 2) throw InvalidArgument("interpolation_sequence: need at least 2 steps");
  std::vector<LatentCapsules> out;
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = i + 1 == steps ? 1.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    out.push_back(interpolate_part(src, tgt, sel, t));
  }
  return out;
}

std::vector<double> flatten_latent(const LatentCapsules& latent) {
  if (latent.capsules.rank() != 2) throw ShapeError("flatten_latent: expected a 2-D capsule matrix");
  const auto v = latent.capsules.values();
  return {v.begin(), v.end()};
}

LatentCapsules unflatten_latent(std::span<const double> values, std::size_t latent_count, std::size_t latent_dim) {
  if (values.size() != latent_count * latent_dim || values.empty()) {
    throw ShapeError("unflatten_latent: " + std::to_string(values.size()) + " values for " +
                     std::to_string(latent_count) + " x " + std::to_string(latent_dim));
  }
  return {Tensor({latent_count, latent_dim}, std::vector<double>(values.begin(), values.end()))};
}

void ClassifierConfig::validate() const {
  if (!(regularization >= 0.0)) throw InvalidArgument("classifier: regularization must be non-negative");
  if (!(learning_rate > 0.0)) throw InvalidArgument("classifier: learning_rate must be positive");
}

std::vector<double> LinearClassifier::scores(std::span<const double> feature) const {
  if (feature.size() != weights.cols()) {
    throw ShapeError("classifier: feature width " + std::to_string(feature.size()) + ", expected " +
                     std::to_string(weights.cols()));
  }
  std::vector<double> s(class_count());
  for (std::size_t c = 0; c < s.size(); ++c) s[c] = dot(weights.row(c), feature) + bias[c];
  return s;
}

std::size_t LinearClassifier::classify(std::span<const double> feature) const {
  const auto s = scores(feature);
  return static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
}

LinearClassifier zero_classifier(std::size_t classes, std::size_t features) {
  if (classes == 0 || features == 0) throw InvalidArgument("classifier: empty class or feature count");
  return {Tensor({classes, features}), std::vector<double>(classes, 0.0)};
}

double hinge_objective(const LinearClassifier& clf, std::span<const std::vector<double>> features,
                       std::span<const std::size_t> labels, double regularization) {
  double loss = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto s = clf.scores(features[i]);
    for (std::size_t c = 0; c < s.size(); ++c) {
      const double y = labels[i] == c ? 1.0 : -1.0;
      loss += std::max(0.0, 1.0 - y * s[c]);
    }
  }
  loss /= static_cast<double>(features.size());
  const auto w = clf.weights.values();
  return loss + 0.5 * regularization * dot(w, w);
}

LinearClassifier train_linear_classifier(std::span<const std::vector<double>> features,
                                         std::span<const std::size_t> labels, const ClassifierConfig& cfg,
                                         ClassifierReport* report) {
  cfg.validate();
  if (features.empty()) throw InvalidArgument("classifier: empty training set");
  if (features.size() != labels.size()) throw ShapeError("classifier: feature and label counts differ");
  const std::size_t classes = *std::max_element(labels.begin(), labels.end()) + 1;
  if (std::set<std::size_t>(labels.begin(), labels.end()).size() < 2) {
    throw InvalidArgument("classifier: training set has a single class");
  }
  const std::size_t width = features.front().size();
  LinearClassifier clf = zero_classifier(classes, width);
  const double n = static_cast<double>(features.size());
  double objective = hinge_objective(clf, features, labels, cfg.regularization);
  double step = cfg.learning_rate;
  if (report) report->objective.push_back(objective);

  LinearClassifier grad = zero_classifier(classes, width);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    grad.weights.fill(0.0);
    std::fill(grad.bias.begin(), grad.bias.end(), 0.0);
    for (std::size_t i = 0; i < features.size(); ++i) {
      const auto s = clf.scores(features[i]);
      for (std::size_t c = 0; c < classes; ++c) {
        const double y = labels[i] == c ? 1.0 : -1.0;
        if (1.0 - y * s[c] <= 0.0) continue;
        auto g = grad.weights.row(c);
        for (std::size_t f = 0; f < width; ++f) g[f] -= y * features[i][f] / n;
        grad.bias[c] -= y / n;
      }
    }
    for (std::size_t k = 0; k < clf.weights.size(); ++k) grad.weights[k] += cfg.regularization * clf.weights[k];

    bool accepted = false;
    while (!accepted && step > 1e-12) {
      LinearClassifier next = clf;
      for (std::size_t k = 0; k < next.weights.size(); ++k) next.weights[k] -= step * grad.weights[k];
      for (std::size_t c = 0; c < classes; ++c) next.bias[c] -= step * grad.bias[c];
      const double value = hinge_objective(next, features, labels, cfg.regularization);
      if (value <= objective) {
        clf = std::move(next);
        objective = value;
        accepted = true;
      } else {
        step *= 0.5;
      }
    }
    if (!accepted) break;
    if (report) {
      report->objective.push_back(objective);
      report->step_sizes.push_back(step);
    }
  }
  return clf;
}

double classifier_accuracy(const LinearClassifier& clf, std::span<const std::vector<double>> features,
                           std::span<const std::size_t> labels) {
  if (features.empty()) throw InvalidArgument("classifier: empty evaluation set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < features.size(); ++i) correct += clf.classify(features[i]) == labels[i];
  return static_cast<double>(correct) / static_cast<double>(features.size());
}

}  // namespace pcaps
