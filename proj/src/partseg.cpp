#include "pcaps/partseg.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "pcaps/adam.hpp"
#include "pcaps/error.hpp"
#include "pcaps/kdtree.hpp"
#include "pcaps/ops.hpp"
#include "pcaps/parameter_store.hpp"
#include "pcaps/random.hpp"

namespace pcaps {

namespace {

std::string layer_name(std::size_t i) { return "partnet.layer" + std::to_string(i); }

std::vector<std::size_t> layer_widths(const PartNetConfig& cfg, std::size_t latent_dim) {
  std::vector<std::size_t> widths{latent_dim + cfg.category_count};
  widths.insert(widths.end(), cfg.hidden_widths.begin(), cfg.hidden_widths.end());
  widths.push_back(cfg.part_count);
  return widths;
}

// Capsule rows with the one-hot appended to each.
Tensor partnet_input(const Tensor& latent, std::span<const double> onehot) {
  const std::size_t rows = latent.rows(), d = latent.cols(), c = onehot.size();
  Tensor x({rows, d + c});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(latent.row(r).data(), d, x.row(r).data());
    std::copy(onehot.begin(), onehot.end(), x.row(r).data() + d);
  }
  return x;
}

Var mlp(Tape& tape, Var x, std::size_t layers, ParameterStore& store) {
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string name = layer_name(i);
    x = ops::add(ops::matmul(x, tape.parameter(store, name + ".weight")), tape.parameter(store, name + ".bias"));
    if (i + 1 < layers) x = ops::relu(x);
  }
  return x;
}

void check_onehot(std::span<const double> onehot, const PartNetConfig& cfg) {
  if (onehot.size() != cfg.category_count) {
    throw ShapeError("partnet: one-hot of length " + std::to_string(onehot.size()) + ", expected " +
                     std::to_string(cfg.category_count));
  }
}

std::size_t argmax_row(const Tensor& t, std::size_t r) {
  const auto row = t.row(r);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

void CapsuleLabeling::validate() const {
  if (part_count == 0) throw InvalidArgument("capsule labeling: part_count must be positive");
  for (std::size_t l : labels) {
    if (l >= part_count) {
      throw InvalidArgument("capsule labeling: label " + std::to_string(l) + " not below part_count " +
                            std::to_string(part_count));
    }
  }
}

void PartNetConfig::validate() const {
  if (category_count == 0) throw InvalidArgument("partnet: category_count must be positive");
  if (part_count < 2) throw InvalidArgument("partnet: part_count must be at least 2");
  if (!(learning_rate > 0.0)) throw InvalidArgument("partnet: learning_rate must be positive");
  for (std::size_t w : hidden_widths) {
    if (w == 0) throw InvalidArgument("partnet: hidden widths must be positive");
  }
}

std::size_t label_mode(std::span<const std::size_t> labels) {
  if (labels.empty()) throw InvalidArgument("label_mode: no labels");
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t l : labels) ++counts[l];
  std::size_t best = counts.begin()->first, best_count = 0;
  for (const auto& [label, count] : counts) {
    if (count > best_count) best = label, best_count = count;
  }
  return best;
}

std::vector<std::size_t> transfer_labels(const PointCloud& labeled, const Tensor& points) {
  if (!labeled.has_labels()) throw InvalidArgument("transfer_labels: source cloud has no labels");
  labeled.validate();
  if (points.rank() != 2 || points.cols() != 3) throw ShapeError("transfer_labels: expected n x 3 points");
  const KdTree tree(labeled.points);
  std::vector<std::size_t> out(points.rows());
  for (std::size_t r = 0; r < points.rows(); ++r) {
    const auto p = points.row(r);
    out[r] = labeled.labels[tree.nearest({p[0], p[1], p[2]}).index];
  }
  return out;
}

CapsuleLabeling gt_capsule_labels(const LatentCapsules& latent, const ModelConfig& model, ParameterStore& store,
                                  const PatchGrid& grid, const PointCloud& gt, std::size_t part_count) {
  if (!gt.has_labels()) throw InvalidArgument("gt_capsule_labels: ground-truth cloud has no labels");
  gt.validate();
  CapsuleLabeling out;
  out.part_count = part_count > 0 ? part_count : *std::max_element(gt.labels.begin(), gt.labels.end()) + 1;
  const Reconstruction recon = reconstruct(latent, grid, model, store);
  const auto nearest = transfer_labels(gt, recon.points);
  std::vector<std::vector<std::size_t>> transferred(model.routing.latent_count);
  for (std::size_t r = 0; r < recon.size(); ++r) transferred[recon.attribution[r]].push_back(nearest[r]);
  for (const auto& labels : transferred) out.labels.push_back(label_mode(labels));
  out.validate();
  return out;
}

std::vector<double> one_hot(std::size_t index, std::size_t count) {
  if (index >= count) throw InvalidArgument("one_hot: index " + std::to_string(index) + " out of " + std::to_string(count));
  std::vector<double> v(count, 0.0);
  v[index] = 1.0;
  return v;
}

void add_partnet_parameters(ParameterStore& store, const PartNetConfig& cfg, std::size_t latent_dim, Rng& rng) {
  cfg.validate();
  const auto widths = layer_widths(cfg, latent_dim);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    store.add_glorot(layer_name(i) + ".weight", widths[i], widths[i + 1], rng);
    store.add(layer_name(i) + ".bias", Tensor({widths[i + 1]}));
  }
}

Var partnet_logits(Tape& tape, Var latent, std::span<const double> category_onehot, const PartNetConfig& cfg,
                   ParameterStore& store) {
  check_onehot(category_onehot, cfg);
  const Var x = tape.constant(partnet_input(latent.value(), category_onehot));
  return mlp(tape, x, cfg.hidden_widths.size() + 1, store);
}

Tensor partnet_forward(const LatentCapsules& latent, std::span<const double> category_onehot,
                       const PartNetConfig& cfg, ParameterStore& store) {
  Tape tape;
  const Var logits = partnet_logits(tape, tape.constant(latent.capsules), category_onehot, cfg, store);
  return ops::softmax(logits, 1).value();
}

std::vector<std::size_t> predict_capsule_parts(const LatentCapsules& latent, std::span<const double> category_onehot,
                                               const PartNetConfig& cfg, ParameterStore& store) {
  const Tensor prob = partnet_forward(latent, category_onehot, cfg, store);
  std::vector<std::size_t> parts(prob.rows());
  for (std::size_t r = 0; r < prob.rows(); ++r) parts[r] = argmax_row(prob, r);
  return parts;
}

PartNetReport train_partnet(std::span<const PartNetSample> data, const PartNetConfig& cfg, ParameterStore& store) {
  cfg.validate();
  if (data.empty()) throw InvalidArgument("train_partnet: empty dataset");
  std::vector<Tensor> inputs;
  std::vector<std::size_t> targets;
  for (const auto& s : data) {
    s.labeling.validate();
    if (s.labeling.labels.size() != s.latent.capsules.rows()) {
      throw ShapeError("train_partnet: labeling size does not match the capsule count");
    }
    if (s.labeling.part_count > cfg.part_count) throw InvalidArgument("train_partnet: labeling has too many parts");
    inputs.push_back(partnet_input(s.latent.capsules, one_hot(s.category, cfg.category_count)));
    targets.insert(targets.end(), s.labeling.labels.begin(), s.labeling.labels.end());
  }
  const Tensor x = concat_rows(inputs);

  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  PartNetReport report;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    store.zero_grad();
    Tape tape;
    const Var logits = mlp(tape, tape.constant(x), cfg.hidden_widths.size() + 1, store);
    const Var loss = ops::cross_entropy(logits, targets);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < targets.size(); ++r) correct += argmax_row(logits.value(), r) == targets[r];
    report.epoch_losses.push_back(loss.value().item());
    report.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(targets.size()));
    tape.backward(loss);
    adam_step(store, adam);
  }
  return report;
}

PointCloud segment_points(const LatentCapsules& latent, std::span<const double> category_onehot,
                          const PatchGrid& grid, const ModelConfig& model, ParameterStore& model_store,
                          const PartNetConfig& partnet, ParameterStore& partnet_store) {
  const auto parts = predict_capsule_parts(latent, category_onehot, partnet, partnet_store);
  const Reconstruction recon = reconstruct(latent, grid, model, model_store);
  PointCloud cloud = PointCloud::from_tensor(recon.points);
  cloud.labels.reserve(recon.size());
  for (std::size_t capsule : recon.attribution) cloud.labels.push_back(parts[capsule]);
  return cloud;
}

PointCloud mode_filter(const PointCloud& cloud, std::size_t k) {
  if (!cloud.has_labels()) throw InvalidArgument("mode_filter: cloud has no labels");
  if (k == 0 || k % 2 == 0) throw InvalidArgument("mode_filter: k must be odd, got " + std::to_string(k));
  if (k > cloud.size()) {
    throw InvalidArgument("mode_filter: k = " + std::to_string(k) + " exceeds the point count " +
                          std::to_string(cloud.size()));
  }
  cloud.validate();
  const KdTree tree(cloud.points);
  PointCloud out = cloud;
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto hits = tree.nearest_k(cloud.points[i], k);
    // Coincident points may crowd out the query point itself.
    if (std::none_of(hits.begin(), hits.end(), [i](const KdTree::Hit& h) { return h.index == i; })) {
      hits.back() = {i, 0.0};
    }
    counts.clear();
    for (const auto& h : hits) ++counts[cloud.labels[h.index]];
    std::size_t best = cloud.labels[i], best_count = 0;
    bool tied = false;
    for (const auto& [label, count] : counts) {
      if (count > best_count) {
        best = label, best_count = count, tied = false;
      } else if (count == best_count) {
        tied = true;
      }
    }
    out.labels[i] = tied ? cloud.labels[i] : best;
  }
  return out;
}

}  // namespace pcaps
