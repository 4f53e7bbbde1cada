#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pcaps/decoder.hpp"

namespace pcaps {

/// How a part missing from both prediction and ground truth enters the mean.
enum class AbsentPartPolicy {
  // IoU 1, included in the mean.
  kCountAsOne,
  // IoU 1 in per_part_iou, left out of the mean.
  kExclude,
};

struct SegMetrics {
  double accuracy = 0.0;
  double mean_iou = 0.0;
  std::vector<double> per_part_iou;
  AbsentPartPolicy absent_policy = AbsentPartPolicy::kCountAsOne;
};

SegMetrics seg_metrics(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                       std::size_t part_count, AbsentPartPolicy policy = AbsentPartPolicy::kCountAsOne);

/// Mean pairwise distance among each capsule's points; 0 for capsules with
/// fewer than two points. Indexed by capsule.
std::vector<double> capsule_spread(const Reconstruction& recon);

double mean_of(std::span<const double> values);

}  // namespace pcaps
