#include "pcaps/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pcaps/error.hpp"

namespace pcaps {

SegMetrics seg_metrics(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                       std::size_t part_count, AbsentPartPolicy policy) {
  if (predicted.size() != truth.size()) {
    throw InvalidArgument("seg_metrics: " + std::to_string(predicted.size()) + " predictions for " +
                          std::to_string(truth.size()) + " labels");
  }
  if (predicted.empty()) throw InvalidArgument("seg_metrics: no labels");
  if (part_count == 0) throw InvalidArgument("seg_metrics: part_count must be positive");
  std::vector<std::size_t> inter(part_count), uni(part_count);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const std::size_t p = predicted[i], g = truth[i];
    if (p >= part_count || g >= part_count) {
      throw InvalidArgument("seg_metrics: label out of range at index " + std::to_string(i));
    }
    if (p == g) {
      ++correct;
      ++inter[p];
      ++uni[p];
    } else {
      ++uni[p];
      ++uni[g];
    }
  }
  SegMetrics m;
  m.absent_policy = policy;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(predicted.size());
  m.per_part_iou.resize(part_count);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t k = 0; k < part_count; ++k) {
    const bool absent = uni[k] == 0;
    m.per_part_iou[k] = absent ? 1.0 : static_cast<double>(inter[k]) / static_cast<double>(uni[k]);
    if (absent && policy == AbsentPartPolicy::kExclude) continue;
    total += m.per_part_iou[k];
    ++counted;
  }
  m.mean_iou = counted == 0 ? 1.0 : total / static_cast<double>(counted);
  return m;
}

std::vector<double> capsule_spread(const Reconstruction& recon) {
  const Tensor& pts = recon.points;
  if (pts.rank() != 2 || pts.cols() != 3 || pts.rows() != recon.attribution.size()) {
    throw ShapeError("capsule_spread: points " + shape_string(pts.shape()) + " do not match " +
                     std::to_string(recon.attribution.size()) + " attributions");
  }
  const std::size_t caps =
      recon.attribution.empty() ? 0 : *std::max_element(recon.attribution.begin(), recon.attribution.end()) + 1;
  std::vector<std::vector<std::size_t>> members(caps);
  for (std::size_t r = 0; r < recon.attribution.size(); ++r) members[recon.attribution[r]].push_back(r);
  std::vector<double> spread(caps, 0.0);
  for (std::size_t c = 0; c < caps; ++c) {
    const auto& rows = members[c];
    if (rows.size() < 2) continue;
    double total = 0.0;
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = a + 1; b < rows.size(); ++b) {
        double sq = 0.0;
        for (std::size_t d = 0; d < 3; ++d) {
          const double diff = pts.at(rows[a], d) - pts.at(rows[b], d);
          sq += diff * diff;
        }
        total += std::sqrt(sq);
      }
    const double pairs = static_cast<double>(rows.size() * (rows.size() - 1) / 2);
    spread[c] = total / pairs;
  }
  return spread;
}

double mean_of(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

}  // namespace pcaps
