#include "pcaps/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "pcaps/cloud_io.hpp"
#include "pcaps/error.hpp"
#include "pcaps/random.hpp"

namespace pcaps {

namespace {

constexpr double kPi = std::numbers::pi;


Point3 unit_vector(Rng& rng) {
  while (true) {
    const Point3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n > 1e-12) return {v[0] / n, v[1] / n, v[2] / n};
  }
}

Point3 on_sphere(Rng& rng, const Point3& center, double radius) {
  const Point3 u = unit_vector(rng);
  return {center[0] + radius * u[0], center[1] + radius * u[1], center[2] + radius * u[2]};
}

// Hemisphere of the given radius bulging along +axis_sign on x.
Point3 on_cap(Rng& rng, const Point3& center, double radius, double axis_sign) {
  Point3 u = unit_vector(rng);
  u[0] = axis_sign * std::abs(u[0]);
  return {center[0] + radius * u[0], center[1] + radius * u[1], center[2] + radius * u[2]};
}

// Open cylinder wall along x.
Point3 on_tube(Rng& rng, double x0, double x1, double radius) {
  const double a = rng.uniform(0.0, 2.0 * kPi);
  return {rng.uniform(x0, x1), radius * std::cos(a), radius * std::sin(a)};
}

// Surface of an axis-aligned box, faces weighted by area.
Point3 on_box(Rng& rng, const Point3& lo, const Point3& hi) {
  const double ex = hi[0] - lo[0], ey = hi[1] - lo[1], ez = hi[2] - lo[2];
  const double areas[3] = {ey * ez, ex * ez, ex * ey};
  const double total = 2.0 * (areas[0] + areas[1] + areas[2]);
  double pick = rng.uniform(0.0, total);
  std::size_t axis = 0;
  while (axis < 2 && pick >= 2.0 * areas[axis]) pick -= 2.0 * areas[axis++];
  Point3 p{rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]), rng.uniform(lo[2], hi[2])};
  p[axis] = rng.uniform() < 0.5 ? lo[axis] : hi[axis];
  return p;
}

// Torus around the z axis; rejection keeps the density uniform in area.
Point3 on_torus(Rng& rng, const Point3& center, double major, double minor) {
  while (true) {
    const double u = rng.uniform(0.0, 2.0 * kPi);
    const double v = rng.uniform(0.0, 2.0 * kPi);
    if (rng.uniform() * (major + minor) > major + minor * std::cos(v)) continue;
    const double ring = major + minor * std::cos(v);
    return {center[0] + ring * std::cos(u), center[1] + ring * std::sin(u), center[2] + minor * std::sin(v)};
  }
}

// Flat rectangle in the plane through `origin` spanned by two axes.
Point3 on_plate(Rng& rng, const Point3& origin, std::size_t axis_a, double half_a, std::size_t axis_b,
                double lo_b, double hi_b) {
  Point3 p = origin;
  p[axis_a] += rng.uniform(-half_a, half_a);
  p[axis_b] += rng.uniform(lo_b, hi_b);
  return p;
}

}  // namespace

std::string family_name(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::kBarbell:
      return "barbell";
    case ShapeFamily::kWingedCross:
      return "winged-cross";
    case ShapeFamily::kCappedCylinder:
      return "capped-cylinder";
    case ShapeFamily::kTorusOnBox:
      return "torus-on-box";
  }
  return "unknown";
}

ShapeFamily parse_family(const std::string& name) {
  if (name == "barbell" || name == "two-sphere-barbell") return ShapeFamily::kBarbell;
  if (name == "winged-cross") return ShapeFamily::kWingedCross;
  if (name == "capped-cylinder") return ShapeFamily::kCappedCylinder;
  if (name == "torus-on-box") return ShapeFamily::kTorusOnBox;
  throw InvalidArgument("unknown shape family '" + name + "'");
}

std::size_t family_part_count(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::kBarbell:
    case ShapeFamily::kTorusOnBox:
      return 2;
    case ShapeFamily::kWingedCross:
    case ShapeFamily::kCappedCylinder:
      return 3;
  }
  return 0;
}

void SyntheticSpec::validate() const {
  if (part_counts.size() != family_part_count(family)) {
    throw InvalidArgument("synthetic: " + family_name(family) + " has " +
                          std::to_string(family_part_count(family)) + " parts, got " +
                          std::to_string(part_counts.size()) + " counts");
  }
  const std::size_t total = std::accumulate(part_counts.begin(), part_counts.end(), std::size_t{0});
  if (total != n_points) {
    throw InvalidArgument("synthetic: part counts sum to " + std::to_string(total) + ", expected " +
                          std::to_string(n_points));
  }
  for (auto c : part_counts)
    if (c == 0) throw InvalidArgument("synthetic: every part needs at least one sample");
  if (!(jitter >= 0.0) || !std::isfinite(jitter)) throw InvalidArgument("synthetic: jitter must be >= 0");
}

SyntheticSpec SyntheticSpec::defaults(ShapeFamily family, std::size_t n_points, std::uint64_t seed, double jitter) {
  std::vector<double> share;
  switch (family) {
    case ShapeFamily::kBarbell:
      share = {0.5, 0.5};
      break;
    case ShapeFamily::kWingedCross:
      share = {0.45, 0.4, 0.15};
      break;
    case ShapeFamily::kCappedCylinder:
      share = {0.6, 0.2, 0.2};
      break;
    case ShapeFamily::kTorusOnBox:
      share = {0.55, 0.45};
      break;
  }
  SyntheticSpec spec;
  spec.family = family;
  spec.n_points = n_points;
  spec.seed = seed;
  spec.jitter = jitter;
  std::size_t used = 0;
  for (std::size_t k = 0; k + 1 < share.size(); ++k) {
    spec.part_counts.push_back(static_cast<std::size_t>(std::floor(share[k] * static_cast<double>(n_points))));
    used += spec.part_counts.back();
  }
  spec.part_counts.push_back(n_points - used);
  return spec;
}

PointCloud generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng shape_rng(derive_seed(spec.seed, {0}));
  Rng sample_rng(derive_seed(spec.seed, {1}));
  PointCloud cloud;
  cloud.category = static_cast<std::size_t>(spec.family);
  cloud.points.reserve(spec.n_points);
  cloud.labels.reserve(spec.n_points);
  auto emit = [&](std::size_t part, auto&& sampler) {
    for (std::size_t i = 0; i < spec.part_counts[part]; ++i) {
      cloud.points.push_back(sampler());
      cloud.labels.push_back(part);
    }
  };
  Rng& r = sample_rng;
  switch (spec.family) {
    case ShapeFamily::kBarbell: {
      const double r0 = shape_rng.uniform(0.3, 0.5), r1 = shape_rng.uniform(0.3, 0.5);
      const double gap = shape_rng.uniform(0.2, 0.6);
      const Point3 c0{-(r0 + gap / 2), 0.0, 0.0}, c1{r1 + gap / 2, 0.0, 0.0};
      emit(0, [&] { return on_sphere(r, c0, r0); });
      emit(1, [&] { return on_sphere(r, c1, r1); });
      break;
    }
    case ShapeFamily::kWingedCross: {
      const double length = shape_rng.uniform(1.6, 2.0), radius = shape_rng.uniform(0.12, 0.18);
      const double span = shape_rng.uniform(0.7, 1.0), chord = shape_rng.uniform(0.25, 0.4);
      const double fin = shape_rng.uniform(0.25, 0.4), fin_chord = shape_rng.uniform(0.15, 0.25);
      const double wing_x = shape_rng.uniform(-0.1, 0.2);
      emit(0, [&] { return on_tube(r, -length / 2, length / 2, radius); });
      emit(1, [&] { return on_plate(r, {wing_x, 0.0, 0.0}, 1, span, 0, -chord / 2, chord / 2); });
      emit(2, [&] { return on_plate(r, {-length / 2 + fin_chord / 2, 0.0, radius}, 0, fin_chord / 2, 2, 0.0, fin); });
      break;
    }
    case ShapeFamily::kCappedCylinder: {
      const double half = shape_rng.uniform(0.4, 0.8), radius = shape_rng.uniform(0.25, 0.45);
      emit(0, [&] { return on_tube(r, -half, half, radius); });
      emit(1, [&] { return on_cap(r, {half, 0.0, 0.0}, radius, 1.0); });
      emit(2, [&] { return on_cap(r, {-half, 0.0, 0.0}, radius, -1.0); });
      break;
    }
    case ShapeFamily::kTorusOnBox: {
      const double hx = shape_rng.uniform(0.5, 0.8), hy = shape_rng.uniform(0.5, 0.8), hz = shape_rng.uniform(0.15, 0.3);
      const double major = shape_rng.uniform(0.3, 0.45), minor = shape_rng.uniform(0.06, 0.14);
      emit(0, [&] { return on_box(r, {-hx, -hy, -hz}, {hx, hy, hz}); });
      emit(1, [&] { return on_torus(r, {0.0, 0.0, hz + minor}, major, minor); });
      break;
    }
  }
  if (spec.jitter > 0.0) {
    Rng jitter_rng(derive_seed(spec.seed, {2}));
    for (auto& p : cloud.points)
      for (auto& v : p) v += spec.jitter * jitter_rng.normal();
  }
  return normalize(cloud);
}

}  // namespace pcaps
