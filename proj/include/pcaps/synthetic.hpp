#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pcaps/point_cloud.hpp"

namespace pcaps {

enum class ShapeFamily {
  kBarbell,         // two disjoint spheres
  kWingedCross,     // cylindrical body, a wing plate and a tail fin
  kCappedCylinder,  // cylinder wall and two hemispherical caps
  kTorusOnBox,      // box surface with a torus resting on top
};

inline constexpr ShapeFamily kAllFamilies[] = {ShapeFamily::kBarbell, ShapeFamily::kWingedCross,
                                               ShapeFamily::kCappedCylinder, ShapeFamily::kTorusOnBox};

std::string family_name(ShapeFamily family);
/// Accepts the names produced by family_name, plus "two-sphere-barbell".
ShapeFamily parse_family(const std::string& name);
std::size_t family_part_count(ShapeFamily family);

struct SyntheticSpec {
  ShapeFamily family = ShapeFamily::kBarbell;
  // One entry per part; must sum to n_points.
  std::vector<std::size_t> part_counts;
  std::size_t n_points = 2048;
  double jitter = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  /// Part counts split in fixed proportions for the family.
  static SyntheticSpec defaults(ShapeFamily family, std::size_t n_points, std::uint64_t seed, double jitter = 0.0);
};

/// Labeled, normalized sample of one randomly parameterized instance. Label k
/// marks points drawn from part k; category is the family index.
PointCloud generate(const SyntheticSpec& spec);

}  // namespace pcaps
