#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iterator>
#include <vector>

#include "pcaps/cloud_io.hpp"
#include "pcaps/synthetic.hpp"

namespace pcaps {

/// Synthetic dataset layout.
struct DataConfig {
  std::vector<ShapeFamily> families{std::begin(kAllFamilies), std::end(kAllFamilies)};
  std::size_t shapes_per_family = 1;
  double jitter = 0.0;
  CloudFormat format = CloudFormat::kXyz;
};

/// Cloud files plus their categories. On disk the directory holds the
/// clouds and a manifest.txt with one "<file name> <category>" per line.
struct Dataset {
  std::vector<PointCloud> clouds;
  std::vector<std::filesystem::path> files;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Shapes of every configured family, seeded by derive_seed(seed, {family, index}).
std::vector<PointCloud> generate_dataset(const DataConfig& cfg, std::size_t n_points, std::uint64_t seed);

/// Writes <family>_<index> files in family order and the manifest.
std::vector<std::filesystem::path> write_dataset(const std::vector<PointCloud>& clouds, const DataConfig& cfg,
                                                 const std::filesystem::path& dir);

/// Reads the manifest's clouds, or every .xyz/.ply file in name order when
/// there is none (category unset). Each cloud is resampled to n_points and
/// normalized.
Dataset read_dataset(const std::filesystem::path& dir, std::size_t n_points, std::uint64_t seed);

/// Resamples to n (seeded) when the size differs, then normalizes.
PointCloud prepare_cloud(const PointCloud& cloud, std::size_t n, std::uint64_t seed);

}  // namespace pcaps
