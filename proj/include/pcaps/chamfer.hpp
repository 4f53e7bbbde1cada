#pragma once

#include <span>

#include "pcaps/kdtree.hpp"
#include "pcaps/point_cloud.hpp"
#include "pcaps/tape.hpp"

namespace pcaps {

struct ChamferOptions {
  // Use squared Euclidean distances instead of plain norms.
  bool squared = false;
};

struct ChamferResult {
  double value = 0.0;  // term_x_to_y + term_y_to_x
  double term_x_to_y = 0.0;
  double term_y_to_x = 0.0;
};

/// Symmetric mean nearest-neighbour distance, brute force:
///   (1/|X|) sum_x min_y |x - y|  +  (1/|Y|) sum_y min_x |x - y|
ChamferResult chamfer(std::span<const Point3> x, std::span<const Point3> y,
                      const ChamferOptions& options = {});

/// Same contract as chamfer() with k-d tree nearest-neighbour queries.
ChamferResult chamfer_fast(std::span<const Point3> x, std::span<const Point3> y,
                           const KdTree& x_index, const KdTree& y_index,
                           const ChamferOptions& options = {});
ChamferResult chamfer_fast(std::span<const Point3> x, std::span<const Point3> y,
                           const ChamferOptions& options = {});

namespace ops {
/// Differentiable Chamfer distance between (n x 3) and (m x 3) point sets.
/// Each point's gradient flows through its matched nearest neighbour only;
/// ties pick the lowest index and zero distances contribute no gradient.
Var chamfer(Var x, Var y, const ChamferOptions& options = {});
}  // namespace ops

}  // namespace pcaps
