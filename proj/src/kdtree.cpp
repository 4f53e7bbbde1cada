#include "pcaps/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "pcaps/error.hpp"

namespace pcaps {

namespace {
constexpr std::size_t kLeafSize = 8;

bool closer(double d, std::size_t i, double best_d, std::size_t best_i) {
  return d < best_d || (d == best_d && i < best_i);
}
}  // namespace

KdTree::KdTree(std::span<const Point3> points) : points_(points), order_(points.size()) {
  if (points.empty()) throw InvalidArgument("KdTree: empty point set");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(2 * points.size() / kLeafSize + 1);
  build(0, points.size());
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({begin, end, -1, 0.0, 0, 0});
  if (end - begin <= kLeafSize) return id;
  Point3 lo = points_[order_[begin]], hi = lo;
  for (std::size_t i = begin; i < end; ++i)
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::min(lo[d], points_[order_[i]][d]);
      hi[d] = std::max(hi[d], points_[order_[i]][d]);
    }
  int axis = 0;
  for (int d = 1; d < 3; ++d)
    if (hi[d] - lo[d] > hi[axis] - lo[axis]) axis = d;
  if (hi[axis] == lo[axis]) return id;  // all coincident: keep as leaf
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

// visit(index, d2) is called for candidate points; visit.bound() returns the
// current pruning radius (squared). Subtrees at distance exactly equal to the
// bound are still visited so lower-index ties are found.
template <class Visit>
void KdTree::search(std::size_t id, const Point3& q, Visit& visit) const {
  const Node& n = nodes_[id];
  if (n.axis < 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) {
      const std::size_t p = order_[i];
      visit(p, squared_distance(points_[p], q));
    }
    return;
  }
  const double diff = q[n.axis] - n.split;
  const std::size_t near = diff < 0 ? n.left : n.right;
  const std::size_t far = diff < 0 ? n.right : n.left;
  search(near, q, visit);
  if (diff * diff <= visit.bound()) search(far, q, visit);
}

KdTree::Hit KdTree::nearest(const Point3& query) const {
  struct {
    Hit best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
    void operator()(std::size_t i, double d) {
      if (closer(d, i, best.distance_sq, best.index)) best = {i, d};
    }
    double bound() const { return best.distance_sq; }
  } visit;
  search(0, query, visit);
  return visit.best;
}

std::vector<KdTree::Hit> KdTree::nearest_k(const Point3& query, std::size_t k) const {
  if (k == 0 || k > points_.size()) {
    throw InvalidArgument("KdTree: k=" + std::to_string(k) + " for " + std::to_string(points_.size()) +
                          " points");
  }
  struct Visit {
    std::size_t k;
    std::vector<Hit> heap;  // max-heap on (distance, index)
    static bool less(const Hit& a, const Hit& b) {
      return a.distance_sq < b.distance_sq || (a.distance_sq == b.distance_sq && a.index < b.index);
    }
    void operator()(std::size_t i, double d) {
      if (heap.size() < k) {
        heap.push_back({i, d});
        std::push_heap(heap.begin(), heap.end(), less);
      } else if (less({i, d}, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), less);
        heap.back() = {i, d};
        std::push_heap(heap.begin(), heap.end(), less);
      }
    }
    double bound() const {
      return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.front().distance_sq;
    }
  } visit{k, {}};
  search(0, query, visit);
  std::sort(visit.heap.begin(), visit.heap.end(), Visit::less);
  return visit.heap;
}

}  // namespace pcaps
