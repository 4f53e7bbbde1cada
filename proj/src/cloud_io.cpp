#include "pcaps/cloud_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string_view>
#include <vector>

#include "pcaps/error.hpp"
#include "pcaps/random.hpp"

namespace pcaps {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

[[noreturn]] void malformed(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw IoError(path.string() + ":" + std::to_string(line) + ": " + what);
}

double parse_real(std::string_view field, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
    malformed(path, line, "invalid coordinate '" + std::string(field) + "'");
  }
  return v;
}

std::size_t parse_label(std::string_view field, const std::filesystem::path& path, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    malformed(path, line, "invalid label '" + std::string(field) + "'");
  }
  return v;
}

std::string format_real(double v) {
  char buf[40];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  return std::string(buf, ptr);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

PointCloud read_xyz(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  std::optional<bool> labeled;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty() || fields[0].front() == '#') continue;
    if (fields.size() != 3 && fields.size() != 4) {
      malformed(path, line_no, "expected 'x y z [label]', got " + std::to_string(fields.size()) + " fields");
    }
    const bool has_label = fields.size() == 4;
    if (labeled && *labeled != has_label) malformed(path, line_no, "labels present on some lines only");
    labeled = has_label;
    cloud.points.push_back({parse_real(fields[0], path, line_no), parse_real(fields[1], path, line_no),
                            parse_real(fields[2], path, line_no)});
    if (has_label) cloud.labels.push_back(parse_label(fields[3], path, line_no));
  }
  if (cloud.empty()) throw IoError(path.string() + ": empty point cloud");
  return cloud;
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  };
  if (!next_line() || split_fields(line) != std::vector<std::string_view>{"ply"}) {
    malformed(path, 1, "missing 'ply' magic");
  }
  std::size_t vertices = 0;
  bool in_vertex = false, seen_vertex = false;
  std::vector<std::string> props;
  while (true) {
    if (!next_line()) malformed(path, line_no, "header ends without end_header");
    const auto f = split_fields(line);
    if (f.empty() || f[0] == "comment" || f[0] == "obj_info") continue;
    if (f[0] == "format") {
      if (f.size() < 2 || f[1] != "ascii") malformed(path, line_no, "only ascii PLY is supported");
    } else if (f[0] == "element") {
      if (f.size() != 3) malformed(path, line_no, "malformed element line");
      in_vertex = f[1] == "vertex";
      if (in_vertex) {
        if (seen_vertex) malformed(path, line_no, "duplicate vertex element");
        seen_vertex = true;
        vertices = parse_label(f[2], path, line_no);
      } else if (!seen_vertex) {
        malformed(path, line_no, "vertex element must come first");
      }
    } else if (f[0] == "property") {
      if (in_vertex) {
        if (f.size() != 3) malformed(path, line_no, "unsupported vertex property");
        props.emplace_back(f[2]);
      }
    } else if (f[0] == "end_header") {
      break;
    } else {
      malformed(path, line_no, "unknown header keyword '" + std::string(f[0]) + "'");
    }
  }
  auto index_of = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(props.begin(), props.end(), name);
    if (it == props.end()) return std::nullopt;
    return static_cast<std::size_t>(it - props.begin());
  };
  const auto ix = index_of("x"), iy = index_of("y"), iz = index_of("z"), il = index_of("label");
  if (!ix || !iy || !iz) malformed(path, line_no, "vertex element lacks x, y or z");
  if (vertices == 0) throw IoError(path.string() + ": empty point cloud");

  PointCloud cloud;
  cloud.points.reserve(vertices);
  for (std::size_t v = 0; v < vertices; ++v) {
    if (!next_line()) malformed(path, line_no + 1, "expected " + std::to_string(vertices) + " vertices, got " +
                                                       std::to_string(v));
    const auto f = split_fields(line);
    if (f.size() != props.size()) {
      malformed(path, line_no, "expected " + std::to_string(props.size()) + " values, got " +
                                   std::to_string(f.size()));
    }
    cloud.points.push_back(
        {parse_real(f[*ix], path, line_no), parse_real(f[*iy], path, line_no), parse_real(f[*iz], path, line_no)});
    if (il) cloud.labels.push_back(parse_label(f[*il], path, line_no));
  }
  return cloud;
}

}  // namespace

CloudFormat parse_cloud_format(const std::string& name) {
  if (name == "xyz") return CloudFormat::kXyz;
  if (name == "ply" || name == "ply-ascii") return CloudFormat::kPlyAscii;
  throw InvalidArgument("unknown cloud format '" + name + "' (expected xyz or ply)");
}

CloudFormat cloud_format_for(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".xyz") return CloudFormat::kXyz;
  if (ext == ".ply") return CloudFormat::kPlyAscii;
  throw InvalidArgument("cannot infer cloud format from '" + path.string() + "'");
}

PointCloud read_cloud(const std::filesystem::path& path, CloudFormat format) {
  PointCloud c = format == CloudFormat::kXyz ? read_xyz(path) : read_ply(path);
  c.validate();
  return c;
}

PointCloud read_cloud(const std::filesystem::path& path) { return read_cloud(path, cloud_format_for(path)); }

void write_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format) {
  cloud.validate();
  std::ostringstream out;
  if (format == CloudFormat::kPlyAscii) {
    out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
        << "\nproperty double x\nproperty double y\nproperty double z\n";
    if (cloud.has_labels()) out << "property int label\n";
    out << "end_header\n";
  }
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    out << format_real(p[0]) << ' ' << format_real(p[1]) << ' ' << format_real(p[2]);
    if (cloud.has_labels()) out << ' ' << cloud.labels[i];
    out << '\n';
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write " + path.string());
  file << out.str();
  if (!file) throw IoError("write failed: " + path.string());
}

void write_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  write_cloud(cloud, path, cloud_format_for(path));
}

std::vector<std::filesystem::path> write_sequence(std::span<const PointCloud> clouds, const std::filesystem::path& dir,
                                                  const std::string& stem, CloudFormat format) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "_%03zu", i);
    paths.push_back(dir / (stem + name + (format == CloudFormat::kXyz ? ".xyz" : ".ply")));
    write_cloud(clouds[i], paths.back(), format);
  }
  return paths;
}

PointCloud normalize(const PointCloud& cloud) {
  if (cloud.empty()) throw InvalidArgument("normalize: empty point cloud");
  Point3 centroid{0.0, 0.0, 0.0};
  for (const auto& p : cloud.points)
    for (std::size_t d = 0; d < 3; ++d) centroid[d] += p[d];
  for (auto& c : centroid) c /= static_cast<double>(cloud.size());
  double radius_sq = 0.0;
  for (const auto& p : cloud.points) radius_sq = std::max(radius_sq, squared_distance(p, centroid));
  if (!(radius_sq > 0.0)) throw InvalidArgument("normalize: all points coincide");
  const double scale = 1.0 / std::sqrt(radius_sq);
  PointCloud out = cloud;
  for (auto& p : out.points)
    for (std::size_t d = 0; d < 3; ++d) p[d] = (p[d] - centroid[d]) * scale;
  return out;
}

PointCloud resample(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
  if (cloud.empty()) throw InvalidArgument("resample: empty point cloud");
  if (n == 0) throw InvalidArgument("resample: target size must be positive");
  Rng rng(seed);
  std::vector<std::size_t> pick;
  if (n <= cloud.size()) {
    // Partial Fisher-Yates: the first n slots are a uniform sample.
    std::vector<std::size_t> idx(cloud.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    pick.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
  } else {
    pick.resize(cloud.size());
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    while (pick.size() < n) pick.push_back(rng.below(cloud.size()));
  }
  PointCloud out;
  out.category = cloud.category;
  out.points.reserve(n);
  for (auto i : pick) out.points.push_back(cloud.points[i]);
  if (cloud.has_labels()) {
    out.labels.reserve(n);
    for (auto i : pick) out.labels.push_back(cloud.labels[i]);
  }
  return out;
}

}  // namespace pcaps
