#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pcaps/point_cloud.hpp"

namespace pcaps {

enum class CloudFormat {
  // One point per line: "x y z [label]".
  kXyz,
  // ASCII PLY with x, y, z and an optional integer `label` vertex property.
  kPlyAscii,
};

/// "xyz" or "ply"; throws InvalidArgument otherwise.
CloudFormat parse_cloud_format(const std::string& name);
/// Format implied by a file extension (.xyz, .ply).
CloudFormat cloud_format_for(const std::filesystem::path& path);

/// Malformed content throws IoError naming the file and line.
PointCloud read_cloud(const std::filesystem::path& path, CloudFormat format);
PointCloud read_cloud(const std::filesystem::path& path);
/// Coordinates are written with 9 significant digits.
void write_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format);
void write_cloud(const PointCloud& cloud, const std::filesystem::path& path);

/// Writes cloud i as <dir>/<stem>_<iii>.<ext> and returns the paths.
std::vector<std::filesystem::path> write_sequence(std::span<const PointCloud> clouds, const std::filesystem::path& dir,
                                                  const std::string& stem, CloudFormat format);

/// Centroid at the origin, farthest point at distance 1. Throws on clouds
/// whose points all coincide.
PointCloud normalize(const PointCloud& cloud);

/// Exactly n points with labels carried along. A larger cloud is subsampled
/// without replacement; a smaller one keeps every point and fills the rest
/// with draws with replacement.
PointCloud resample(const PointCloud& cloud, std::size_t n, std::uint64_t seed);

}  // namespace pcaps
