#include "pcaps/chamfer.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "pcaps/error.hpp"

namespace pcaps {

namespace {

struct Matches {
  std::vector<std::size_t> x_to_y;  // nearest y for each x
  std::vector<std::size_t> y_to_x;
  std::vector<double> dx;  // squared distances
  std::vector<double> dy;
};

// One pass over all pairs yields both directions.
Matches brute_force(const double* x, std::size_t n, const double* y, std::size_t m) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  Matches r{std::vector<std::size_t>(n, 0), std::vector<std::size_t>(m, 0), std::vector<double>(n, inf),
            std::vector<double>(m, inf)};
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = x[3 * i], x1 = x[3 * i + 1], x2 = x[3 * i + 2];
    double best = inf;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const double a = x0 - y[3 * j], b = x1 - y[3 * j + 1], c = x2 - y[3 * j + 2];
      const double d = a * a + b * b + c * c;
      if (d < best) {
        best = d;
        arg = j;
      }
      if (d < r.dy[j]) {
        r.dy[j] = d;
        r.y_to_x[j] = i;
      }
    }
    r.dx[i] = best;
    r.x_to_y[i] = arg;
  }
  return r;
}

double as_distance(double d2, const ChamferOptions& o) { return o.squared ? d2 : std::sqrt(d2); }

ChamferResult summarize(const std::vector<double>& dx, const std::vector<double>& dy,
                        const ChamferOptions& o) {
  ChamferResult r;
  for (double d : dx) r.term_x_to_y += as_distance(d, o);
  for (double d : dy) r.term_y_to_x += as_distance(d, o);
  r.term_x_to_y /= static_cast<double>(dx.size());
  r.term_y_to_x /= static_cast<double>(dy.size());
  r.value = r.term_x_to_y + r.term_y_to_x;
  return r;
}

void require_nonempty(std::size_t n, std::size_t m) {
  if (n == 0 || m == 0) throw InvalidArgument("chamfer: empty point set");
}

}  // namespace

ChamferResult chamfer(std::span<const Point3> x, std::span<const Point3> y, const ChamferOptions& options) {
  require_nonempty(x.size(), y.size());
  const Matches m = brute_force(x.data()->data(), x.size(), y.data()->data(), y.size());
  return summarize(m.dx, m.dy, options);
}

ChamferResult chamfer_fast(std::span<const Point3> x, std::span<const Point3> y, const KdTree& x_index,
                           const KdTree& y_index, const ChamferOptions& options) {
  require_nonempty(x.size(), y.size());
  if (x_index.size() != x.size() || y_index.size() != y.size()) {
    throw InvalidArgument("chamfer_fast: index does not match point set");
  }
  std::vector<double> dx(x.size()), dy(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = y_index.nearest(x[i]).distance_sq;
  for (std::size_t j = 0; j < y.size(); ++j) dy[j] = x_index.nearest(y[j]).distance_sq;
  return summarize(dx, dy, options);
}

ChamferResult chamfer_fast(std::span<const Point3> x, std::span<const Point3> y, const ChamferOptions& options) {
  require_nonempty(x.size(), y.size());
  const KdTree xi(x), yi(y);
  return chamfer_fast(x, y, xi, yi, options);
}

namespace ops {

Var chamfer(Var x, Var y, const ChamferOptions& options) {
  const Tensor& xv = x.value();
  const Tensor& yv = y.value();
  if (xv.rank() != 2 || yv.rank() != 2 || xv.cols() != 3 || yv.cols() != 3) {
    throw ShapeError("chamfer: expected (n x 3) inputs, got " + shape_string(xv.shape()) + " and " +
                     shape_string(yv.shape()));
  }
  const std::size_t n = xv.rows(), m = yv.rows();
  Matches match = brute_force(xv.data(), n, yv.data(), m);
  const ChamferResult r = summarize(match.dx, match.dy, options);
  Tape& tape = x.tape();
  if (tape.options().track_branches) {
    for (auto j : match.x_to_y) tape.note_branch(j);
    for (auto i : match.y_to_x) tape.note_branch(i);
  }
  return tape.record(
      "chamfer", Tensor::scalar(r.value), {x, y},
      [x, y, n, m, options, match = std::move(match)](Tape& t, const Tensor&, const Tensor& g) {
        const Tensor& xv = t.value(x);
        const Tensor& yv = t.value(y);
        Tensor* gx = t.requires_grad(x) ? &t.grad(x) : nullptr;
        Tensor* gy = t.requires_grad(y) ? &t.grad(y) : nullptr;
        // d|a - b| / da = (a - b) / |a - b|, or 2 (a - b) when squared.
        auto pull = [&](const Tensor& av, std::size_t ai, Tensor* ga, const Tensor& bv, std::size_t bi,
                        Tensor* gb, double d2, double weight) {
          double k;
          if (options.squared) {
            k = 2.0 * weight;
          } else {
            if (d2 == 0.0) return;
            k = weight / std::sqrt(d2);
          }
          for (std::size_t d = 0; d < 3; ++d) {
            const double diff = av[3 * ai + d] - bv[3 * bi + d];
            if (ga) (*ga)[3 * ai + d] += k * diff;
            if (gb) (*gb)[3 * bi + d] -= k * diff;
          }
        };
        const double wx = g[0] / static_cast<double>(n);
        const double wy = g[0] / static_cast<double>(m);
        for (std::size_t i = 0; i < n; ++i) pull(xv, i, gx, yv, match.x_to_y[i], gy, match.dx[i], wx);
        for (std::size_t j = 0; j < m; ++j) pull(yv, j, gy, xv, match.y_to_x[j], gx, match.dy[j], wy);
      });
}

}  // namespace ops
}  // namespace pcaps
