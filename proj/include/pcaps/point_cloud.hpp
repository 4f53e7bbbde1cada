#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pcaps/tensor.hpp"

namespace pcaps {

using Point3 = std::array<double, 3>;

/// Ordered 3-D points with optional per-point part labels and a category.
struct PointCloud {
  std::vector<Point3> points;
  std::vector<std::size_t> labels;  // empty, or one per point
  std::optional<std::size_t> category;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_labels() const { return !labels.empty(); }

  /// Throws on non-finite coordinates or a label count mismatch.
  void validate() const;

  /// (size x 3) tensor of the coordinates.
  Tensor to_tensor() const;
  static PointCloud from_tensor(const Tensor& t);
};

inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace pcaps
