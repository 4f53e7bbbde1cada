#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "pcaps/chamfer.hpp"
#include "pcaps/error.hpp"
#include "pcaps/gradcheck.hpp"
#include "pcaps/kdtree.hpp"
#include "pcaps/metrics.hpp"
#include "pcaps/random.hpp"

namespace pcaps {
namespace {

std::vector<Point3> random_points(std::size_t n, Rng& rng) {
  std::vector<Point3> pts(n);
  for (auto& p : pts)
    for (auto& v : p) v = rng.uniform(-1.0, 1.0);
  return pts;
}

// Direct transcription of the definition, independent of the library.
double reference_chamfer(const std::vector<Point3>& x, const std::vector<Point3>& y) {
  auto directed = [](const std::vector<Point3>& a, const std::vector<Point3>& b) {
    double total = 0.0;
    for (const auto& p : a) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : b) {
        best = std::min(best, std::sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) +
                                        (p[2] - q[2]) * (p[2] - q[2])));
      }
      total += best;
    }
    return total / static_cast<double>(a.size());
  };
  return directed(x, y) + directed(y, x);
}

TEST(Chamfer, SinglePairFixture) {
  const std::vector<Point3> x{{0, 0, 0}}, y{{1, 0, 0}};
  const auto r = chamfer(x, y);
  EXPECT_EQ(r.value, 2.0);
  EXPECT_EQ(r.term_x_to_y, 1.0);
  EXPECT_EQ(r.term_y_to_x, 1.0);
  EXPECT_EQ(chamfer_fast(x, y).value, 2.0);
}

TEST(Chamfer, AsymmetricSizesFixture) {
  const std::vector<Point3> x{{0, 0, 0}, {1, 0, 0}}, y{{0, 0, 0}};
  const auto r = chamfer(x, y);
  EXPECT_EQ(r.value, 0.5);
  EXPECT_EQ(r.term_x_to_y, 0.5);
  EXPECT_EQ(r.term_y_to_x, 0.0);
  EXPECT_EQ(chamfer_fast(x, y).value, 0.5);
}

TEST(Chamfer, SelfDistanceIsZero) {
  Rng rng(3);
  const auto x = random_points(100, rng);
  EXPECT_EQ(chamfer(x, x).value, 0.0);
  EXPECT_EQ(chamfer_fast(x, x).value, 0.0);
}

TEST(Chamfer, SymmetricAndSumOfTerms) {
  Rng rng(4);
  const auto x = random_points(50, rng), y = random_points(70, rng);
  const auto a = chamfer_fast(x, y), b = chamfer_fast(y, x);
  EXPECT_NEAR(a.value, b.value, 1e-15);
  EXPECT_EQ(a.value, a.term_x_to_y + a.term_y_to_x);
  EXPECT_GE(a.value, 0.0);
}

TEST(Chamfer, SquaredOption) {
  const std::vector<Point3> x{{0, 0, 0}}, y{{2, 0, 0}};
  EXPECT_EQ(chamfer(x, y, {.squared = true}).value, 8.0);
  EXPECT_EQ(chamfer_fast(x, y, {.squared = true}).value, 8.0);
}

TEST(Chamfer, EmptySetRejected) {
  const std::vector<Point3> x{{0, 0, 0}}, empty;
  EXPECT_THROW(chamfer(x, empty), InvalidArgument);
  EXPECT_THROW(chamfer(empty, x), InvalidArgument);
  EXPECT_THROW(chamfer_fast(empty, x), InvalidArgument);
}

TEST(Chamfer, FastMatchesBruteForceOnRandomPairs) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = random_points(1 + rng.below(256), rng);
    const auto y = random_points(1 + rng.below(256), rng);
    const double oracle = reference_chamfer(x, y);
    ASSERT_NEAR(chamfer(x, y).value, oracle, 1e-9) << "trial " << trial;
    ASSERT_NEAR(chamfer_fast(x, y).value, oracle, 1e-9) << "trial " << trial;
  }
}

TEST(Chamfer, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    GradCheckCase c;
    c.name = "chamfer";
    Rng rng(seed);
    Tensor x({8, 3}), y({6, 3});
    for (auto& v : x.values()) v = rng.uniform(-1, 1);
    for (auto& v : y.values()) v = rng.uniform(-1, 1);
    c.store.add("x", x);
    c.store.add("y", y);
    c.loss = [](Tape& t, ParameterStore& s) {
      return ops::chamfer(t.parameter(s, "x"), t.parameter(s, "y"));
    };
    const auto r = check_gradients(c);
    EXPECT_TRUE(r.passed) << "seed " << seed << " max error " << r.max_error;
  }
}

TEST(Chamfer, DifferentiableValueMatchesPlainValue) {
  Rng rng(5);
  const auto x = random_points(30, rng), y = random_points(20, rng);
  Tape tape;
  PointCloud cx{x, {}, {}}, cy{y, {}, {}};
  Var v = ops::chamfer(tape.constant(cx.to_tensor()), tape.constant(cy.to_tensor()));
  EXPECT_NEAR(v.value().item(), chamfer(x, y).value, 1e-14);
}

TEST(KdTree, NearestMatchesBruteForce) {
  Rng rng(8);
  const auto pts = random_points(500, rng);
  const KdTree tree(pts);
  for (int q = 0; q < 300; ++q) {
    const Point3 query{rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (squared_distance(pts[i], query) < squared_distance(pts[best], query)) best = i;
    const auto hit = tree.nearest(query);
    ASSERT_EQ(hit.index, best);
    ASSERT_EQ(hit.distance_sq, squared_distance(pts[best], query));
  }
}

TEST(KdTree, TiesResolveToLowestIndex) {
  std::vector<Point3> pts;
  for (int i = 0; i < 40; ++i) pts.push_back({static_cast<double>(i % 4), 0.0, 0.0});
  const KdTree tree(pts);
  EXPECT_EQ(tree.nearest({2.0, 0.0, 0.0}).index, 2u);
  EXPECT_EQ(tree.nearest({1.5, 0.0, 0.0}).index, 1u);
}

TEST(KdTree, NearestKOrderedByDistanceThenIndex) {
  Rng rng(9);
  auto pts = random_points(200, rng);
  pts.push_back(pts[17]);
  const KdTree tree(pts);
  const Point3 q = pts[17];
  const auto hits = tree.nearest_k(q, 9);
  ASSERT_EQ(hits.size(), 9u);
  EXPECT_EQ(hits[0].index, 17u);
  EXPECT_EQ(hits[1].index, 200u);
  for (std::size_t i = 1; i < hits.size(); ++i) {
    EXPECT_TRUE(hits[i - 1].distance_sq < hits[i].distance_sq ||
                (hits[i - 1].distance_sq == hits[i].distance_sq && hits[i - 1].index < hits[i].index));
  }
  EXPECT_THROW(tree.nearest_k(q, 0), InvalidArgument);
  EXPECT_THROW(tree.nearest_k(q, 202), InvalidArgument);
}

TEST(SegMetrics, IdenticalLabelings) {
  const std::vector<std::size_t> a{0, 1, 1, 2};
  const auto m = seg_metrics(a, a, 3);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.mean_iou, 1.0);
}

TEST(SegMetrics, DisjointLabelings) {
  const std::vector<std::size_t> pred{0, 0, 0}, gt{1, 1, 1};
  const auto m = seg_metrics(pred, gt, 2);
  EXPECT_EQ(m.accuracy, 0.0);
  EXPECT_EQ(m.per_part_iou[0], 0.0);
  EXPECT_EQ(m.per_part_iou[1], 0.0);
  EXPECT_EQ(m.mean_iou, 0.0);
}

TEST(SegMetrics, HandComputedExample) {
  const std::vector<std::size_t> pred{0, 0, 1, 1}, gt{0, 1, 1, 1};
  const auto m = seg_metrics(pred, gt, 2);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.75);
  EXPECT_DOUBLE_EQ(m.per_part_iou[0], 0.5);
  EXPECT_DOUBLE_EQ(m.per_part_iou[1], 2.0 / 3.0);
  EXPECT_NEAR(m.mean_iou, 0.5833, 1e-4);
}

TEST(SegMetrics, AbsentPartPolicies) {
  const std::vector<std::size_t> pred{0, 0, 1, 1}, gt{0, 1, 1, 1};
  const auto counted = seg_metrics(pred, gt, 3);
  EXPECT_EQ(counted.per_part_iou[2], 1.0);
  EXPECT_NEAR(counted.mean_iou, (0.5 + 2.0 / 3.0 + 1.0) / 3.0, 1e-15);
  const auto excluded = seg_metrics(pred, gt, 3, AbsentPartPolicy::kExclude);
  EXPECT_EQ(excluded.per_part_iou[2], 1.0);
  EXPECT_NEAR(excluded.mean_iou, (0.5 + 2.0 / 3.0) / 2.0, 1e-15);
}

TEST(SegMetrics, AccuracyIsMeanIndicator) {
  Rng rng(2);
  std::vector<std::size_t> pred(97), gt(97);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = rng.below(4);
    gt[i] = rng.below(4);
    hits += pred[i] == gt[i];
  }
  const auto m = seg_metrics(pred, gt, 4);
  EXPECT_DOUBLE_EQ(m.accuracy, static_cast<double>(hits) / 97.0);
  EXPECT_LE(m.mean_iou, 1.0);
}

TEST(SegMetrics, RejectsBadInput) {
  const std::vector<std::size_t> a{0, 1}, b{0};
  EXPECT_THROW(seg_metrics(a, b, 2), InvalidArgument);
  const std::vector<std::size_t> c{0, 5};
  EXPECT_THROW(seg_metrics(c, a, 2), InvalidArgument);
}

Reconstruction single_capsule(std::vector<Point3> pts) {
  Reconstruction r;
  r.points = PointCloud{pts, {}, {}}.to_tensor();
  r.attribution.assign(pts.size(), 0);
  return r;
}

TEST(CapsuleSpread, CoincidentPointsHaveZeroSpread) {
  EXPECT_EQ(capsule_spread(single_capsule({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}}))[0], 0.0);
}

TEST(CapsuleSpread, SinglePair) {
  EXPECT_EQ(capsule_spread(single_capsule({{0, 0, 0}, {1, 0, 0}}))[0], 1.0);
}

TEST(CapsuleSpread, EquilateralTriangle) {
  const double h = std::sqrt(3.0) / 2.0;
  EXPECT_NEAR(capsule_spread(single_capsule({{0, 0, 0}, {1, 0, 0}, {0.5, h, 0}}))[0], 1.0, 1e-15);
}

TEST(CapsuleSpread, PerCapsuleGroups) {
  Reconstruction r;
  r.points = PointCloud{{{0, 0, 0}, {0, 0, 2}, {5, 5, 5}, {5, 5, 5}}, {}, {}}.to_tensor();
  r.attribution = {0, 0, 1, 1};
  const auto s = capsule_spread(r);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0], 2.0);
  EXPECT_EQ(s[1], 0.0);
}

}  // namespace
}  // namespace pcaps
