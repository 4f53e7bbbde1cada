#include "pcaps/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "pcaps/error.hpp"
#include "pcaps/random.hpp"

namespace pcaps {

namespace {

constexpr std::uint64_t kDataTag = 20;
constexpr std::uint64_t kResampleTag = 21;

}  // namespace

std::vector<PointCloud> generate_dataset(const DataConfig& cfg, std::size_t n_points, std::uint64_t seed) {
  if (cfg.families.empty() || cfg.shapes_per_family == 0) throw InvalidArgument("dataset: nothing to generate");
  std::vector<PointCloud> clouds;
  for (ShapeFamily family : cfg.families) {
    for (std::size_t i = 0; i < cfg.shapes_per_family; ++i) {
      const auto shape_seed = derive_seed(seed, {kDataTag, static_cast<std::uint64_t>(family), i});
      clouds.push_back(generate(SyntheticSpec::defaults(family, n_points, shape_seed, cfg.jitter)));
    }
  }
  return clouds;
}

std::vector<std::filesystem::path> write_dataset(const std::vector<PointCloud>& clouds, const DataConfig& cfg,
                                                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  std::ostringstream manifest;
  std::vector<std::size_t> counter(std::size(kAllFamilies), 0);
  for (const auto& cloud : clouds) {
    if (!cloud.category) throw InvalidArgument("dataset: cloud without a category");
    const auto family = static_cast<ShapeFamily>(*cloud.category);
    const std::string name = family_name(family) + "_" + std::to_string(counter.at(*cloud.category)++) +
                             (cfg.format == CloudFormat::kXyz ? ".xyz" : ".ply");
    write_cloud(cloud, dir / name, cfg.format);
    manifest << name << ' ' << *cloud.category << '\n';
    paths.push_back(dir / name);
  }
  std::ofstream out(dir / kManifestName, std::ios::trunc);
  out << manifest.str();
  if (!out) throw IoError("cannot write " + (dir / kManifestName).string());
  return paths;
}

PointCloud prepare_cloud(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
  return normalize(cloud.size() == n ? cloud : resample(cloud, n, seed));
}

Dataset read_dataset(const std::filesystem::path& dir, std::size_t n_points, std::uint64_t seed) {
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset: " + dir.string() + " is not a directory");
  std::vector<std::pair<std::filesystem::path, std::optional<std::size_t>>> entries;
  const auto manifest = dir / kManifestName;
  if (std::filesystem::exists(manifest)) {
    std::ifstream in(manifest);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::istringstream ls(line);
      std::string name;
      long long category = -1;
      if (!(ls >> name >> category) || category < 0) {
        throw IoError(manifest.string() + ":" + std::to_string(line_no) + ": expected '<file> <category>'");
      }
      entries.emplace_back(dir / name, static_cast<std::size_t>(category));
    }
  } else {
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".xyz" || ext == ".ply")) entries.emplace_back(e.path(), std::nullopt);
    }
    std::sort(entries.begin(), entries.end());
  }
  if (entries.empty()) throw IoError("dataset: no point clouds in " + dir.string());
  Dataset data;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    PointCloud cloud = prepare_cloud(read_cloud(entries[i].first), n_points, derive_seed(seed, {kResampleTag, i}));
    cloud.category = entries[i].second;
    data.clouds.push_back(std::move(cloud));
    data.files.push_back(entries[i].first);
  }
  return data;
}

}  // namespace pcaps
