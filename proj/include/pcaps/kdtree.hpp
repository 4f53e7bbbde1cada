#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pcaps/point_cloud.hpp"

namespace pcaps {

/// Static 3-D k-d tree over a borrowed point array. Exact queries; equal
/// distances resolve to the lowest point index.
class KdTree {
 public:
  struct Hit {
    std::size_t index;
    double distance_sq;
  };

  explicit KdTree(std::span<const Point3> points);

  Hit nearest(const Point3& query) const;
  /// The k closest points ordered by (distance, index).
  std::vector<Hit> nearest_k(const Point3& query, std::size_t k) const;

  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    std::size_t begin, end;  // range in order_
    int axis;                // -1 for leaves
    double split;
    std::size_t left, right;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  template <class Visit>
  void search(std::size_t node, const Point3& q, Visit& visit) const;

  std::span<const Point3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace pcaps
