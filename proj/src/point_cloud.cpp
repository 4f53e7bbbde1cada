#include "pcaps/point_cloud.hpp"

#include <cmath>
#include <string>

#include "pcaps/error.hpp"

namespace pcaps {

void PointCloud::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (double v : points[i]) {
      if (!std::isfinite(v)) throw NonFiniteError("point " + std::to_string(i) + " is not finite");
    }
  }
  if (!labels.empty() && labels.size() != points.size()) {
    throw ShapeError("cloud has " + std::to_string(points.size()) + " points but " +
                     std::to_string(labels.size()) + " labels");
  }
}

Tensor PointCloud::to_tensor() const {
  if (points.empty()) throw InvalidArgument("empty point cloud");
  Tensor t({points.size(), 3});
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t d = 0; d < 3; ++d) t.at(i, d) = points[i][d];
  return t;
}

PointCloud PointCloud::from_tensor(const Tensor& t) {
  if (t.rank() != 2 || t.cols() != 3) {
    throw ShapeError("expected an (n x 3) tensor, got " + shape_string(t.shape()));
  }
  PointCloud c;
  c.points.resize(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) c.points[i] = {t.at(i, 0), t.at(i, 1), t.at(i, 2)};
  return c;
}

}  // namespace pcaps
