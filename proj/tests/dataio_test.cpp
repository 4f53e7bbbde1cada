#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pcaps/adam.hpp"
#include "pcaps/checkpoint.hpp"
#include "pcaps/cloud_io.hpp"
#include "pcaps/error.hpp"
#include "pcaps/model.hpp"
#include "pcaps/parameter_store.hpp"
#include "pcaps/random.hpp"
#include "pcaps/run_config.hpp"
#include "pcaps/synthetic.hpp"
#include "test_util.hpp"

namespace pcaps {
namespace {

using testing::TempDir;

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << data;
}

PointCloud random_cloud(std::size_t n, std::uint64_t seed, bool labels) {
  Rng rng(seed);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    if (labels) c.labels.push_back(rng.below(5));
  }
  return c;
}

double max_radius(const PointCloud& c) {
  double r = 0.0;
  for (const auto& p : c.points) r = std::max(r, std::sqrt(squared_distance(p, {0, 0, 0})));
  return r;
}

Point3 centroid(const PointCloud& c) {
  Point3 m{0, 0, 0};
  for (const auto& p : c.points)
    for (int a = 0; a < 3; ++a) m[a] += p[a];
  for (auto& v : m) v /= static_cast<double>(c.size());
  return m;
}

// ---- cloud files ----

// Coordinates in normalized units, where 9 significant digits are within 1e-9.
TEST(CloudIo, RoundTripWithinTolerance) {
  TempDir dir("io");
  for (CloudFormat format : {CloudFormat::kXyz, CloudFormat::kPlyAscii}) {
    for (bool labels : {false, true}) {
      const PointCloud c = random_cloud(300, 5 + labels, labels);
      const auto path = dir / (std::string("c") + (labels ? "l" : "u") + (format == CloudFormat::kXyz ? ".xyz" : ".ply"));
      write_cloud(c, path);
      const PointCloud back = read_cloud(path);
      ASSERT_EQ(back.size(), c.size());
      EXPECT_EQ(back.labels, c.labels);
      for (std::size_t i = 0; i < c.size(); ++i)
        for (int a = 0; a < 3; ++a) EXPECT_NEAR(back.points[i][a], c.points[i][a], 1e-9);
    }
  }
}

TEST(CloudIo, LabeledXyzLine) {
  TempDir dir("io");
  spit(dir / "one.xyz", "0 0 0 2\n");
  const PointCloud c = read_cloud(dir / "one.xyz");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c.points[0], (Point3{0, 0, 0}));
  EXPECT_EQ(c.labels, std::vector<std::size_t>{2});
}

TEST(CloudIo, CommentsAndBlankLinesAreSkipped) {
  TempDir dir("io");
  spit(dir / "c.xyz", "# header\n\n1 2 3\n  4 5 6  \n");
  EXPECT_EQ(read_cloud(dir / "c.xyz").size(), 2u);
}

TEST(CloudIo, EmptyFileIsAnError) {
  TempDir dir("io");
  spit(dir / "empty.xyz", "");
  EXPECT_THROW(read_cloud(dir / "empty.xyz"), IoError);
}

TEST(CloudIo, MalformedLineNamesTheLine) {
  TempDir dir("io");
  spit(dir / "bad.xyz", "0 0 0\n1 1 1\n1 x 1\n");
  try {
    read_cloud(dir / "bad.xyz");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
}

TEST(CloudIo, MixedLabelPresenceIsAnError) {
  TempDir dir("io");
  spit(dir / "mixed.xyz", "0 0 0 1\n1 1 1\n");
  EXPECT_THROW(read_cloud(dir / "mixed.xyz"), IoError);
}

TEST(CloudIo, UnknownFormatIsRejected) {
  EXPECT_THROW(parse_cloud_format("obj"), InvalidArgument);
  EXPECT_THROW(cloud_format_for("points.obj"), InvalidArgument);
  EXPECT_EQ(parse_cloud_format("ply"), CloudFormat::kPlyAscii);
}

TEST(CloudIo, PlyWithExtraPropertiesAndLabel) {
  TempDir dir("io");
  spit(dir / "p.ply",
       "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
       "property float nx\nproperty int label\nend_header\n1 2 3 0.5 4\n-1 -2 -3 0.5 7\n");
  const PointCloud c = read_cloud(dir / "p.ply");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.points[1], (Point3{-1, -2, -3}));
  EXPECT_EQ(c.labels, (std::vector<std::size_t>{4, 7}));
}

TEST(CloudIo, PlyVertexCountMismatchIsAnError) {
  TempDir dir("io");
  spit(dir / "p.ply",
       "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
       "end_header\n1 2 3\n");
  EXPECT_THROW(read_cloud(dir / "p.ply"), IoError);
}

TEST(CloudIo, SequenceFilesAreNumbered) {
  TempDir dir("io");
  std::vector<PointCloud> clouds{random_cloud(4, 1, true), random_cloud(4, 2, true)};
  const auto paths = write_sequence(clouds, dir.path(), "seq", CloudFormat::kPlyAscii);
  ASSERT_EQ(paths.size(), 2u);
  EXPECT_EQ(paths[1].filename(), "seq_001.ply");
  EXPECT_EQ(read_cloud(paths[1]).labels, clouds[1].labels);
}

// ---- normalize / resample ----

TEST(Normalize, TwoPointExample) {
  PointCloud c;
  c.points = {{0, 0, 0}, {2, 0, 0}};
  const PointCloud n = normalize(c);
  EXPECT_EQ(n.points[0], (Point3{-1, 0, 0}));
  EXPECT_EQ(n.points[1], (Point3{1, 0, 0}));
}

TEST(Normalize, UnitRadiusCenteredAndIdempotent) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PointCloud once = normalize(random_cloud(100, seed, true));
    EXPECT_NEAR(max_radius(once), 1.0, 1e-12);
    for (double v : centroid(once)) EXPECT_NEAR(v, 0.0, 1e-12);
    const PointCloud twice = normalize(once);
    for (std::size_t i = 0; i < once.size(); ++i)
      for (int a = 0; a < 3; ++a) EXPECT_NEAR(twice.points[i][a], once.points[i][a], 1e-12);
    EXPECT_EQ(twice.labels, once.labels);
  }
}

TEST(Normalize, CoincidentPointsAreRejected) {
  PointCloud c;
  c.points = {{1, 1, 1}, {1, 1, 1}};
  EXPECT_THROW(normalize(c), InvalidArgument);
}

TEST(Resample, AlwaysExactlyN) {
  const PointCloud c = random_cloud(50, 3, true);
  for (std::size_t n : {1u, 10u, 50u, 51u, 200u}) EXPECT_EQ(resample(c, n, 7).size(), n);
}

TEST(Resample, SameSizeKeepsTheMultiset) {
  const PointCloud c = random_cloud(64, 4, true);
  const PointCloud r = resample(c, 64, 9);
  auto key = [](const PointCloud& x) {
    std::vector<std::pair<Point3, std::size_t>> v;
    for (std::size_t i = 0; i < x.size(); ++i) v.push_back({x.points[i], x.labels[i]});
    std::sort(v.begin(), v.end());
    return v;
  };
  EXPECT_EQ(key(r), key(c));
}

TEST(Resample, LabelsStayPairedWithPoints) {
  PointCloud c = random_cloud(300, 5, false);
  for (std::size_t i = 0; i < c.size(); ++i) c.labels.push_back(i);
  for (std::size_t n : {100u, 700u}) {
    const PointCloud r = resample(c, n, 11);
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(r.points[i], c.points[r.labels[i]]);
  }
}

TEST(Resample, SmallerCloudKeepsEveryPoint) {
  PointCloud c = random_cloud(30, 6, false);
  for (std::size_t i = 0; i < c.size(); ++i) c.labels.push_back(i);
  const PointCloud r = resample(c, 100, 2);
  std::vector<int> seen(30, 0);
  for (auto l : r.labels) seen[l] = 1;
  EXPECT_EQ(std::count(seen.begin(), seen.end(), 1), 30);
}

TEST(Resample, IsSeeded) {
  const PointCloud c = random_cloud(100, 7, true);
  EXPECT_EQ(resample(c, 40, 1).points, resample(c, 40, 1).points);
  EXPECT_NE(resample(c, 40, 1).points, resample(c, 40, 2).points);
}

// ---- synthetic generator ----

TEST(Synthetic, SameSeedSameCloud) {
  for (ShapeFamily f : kAllFamilies) {
    const auto spec = SyntheticSpec::defaults(f, 2048, 42, 0.01);
    const PointCloud a = generate(spec), b = generate(spec);
    EXPECT_EQ(a.points, b.points);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_NE(generate(SyntheticSpec::defaults(f, 2048, 43, 0.01)).points, a.points);
  }
}

TEST(Synthetic, LabelHistogramMatchesPartCounts) {
  for (ShapeFamily f : kAllFamilies) {
    const auto spec = SyntheticSpec::defaults(f, 2048, 3);
    const PointCloud c = generate(spec);
    ASSERT_EQ(c.size(), 2048u);
    std::vector<std::size_t> hist(spec.part_counts.size(), 0);
    for (auto l : c.labels) ++hist.at(l);
    EXPECT_EQ(hist, spec.part_counts);
    EXPECT_EQ(c.category, static_cast<std::size_t>(f));
  }
}

TEST(Synthetic, OutputIsNormalized) {
  for (ShapeFamily f : kAllFamilies) {
    const PointCloud c = generate(SyntheticSpec::defaults(f, 1000, 8, 0.02));
    EXPECT_NEAR(max_radius(c), 1.0, 1e-12);
    for (double v : centroid(c)) EXPECT_NEAR(v, 0.0, 1e-12);
  }
}

// Algebraic sphere fit |p|^2 + a.p + b = 0 by least squares; the residual is
// the largest deviation of |p - c| from the fitted radius.
double sphere_fit_residual(const std::vector<Point3>& pts) {
  Eigen::MatrixXd A(pts.size(), 4);
  Eigen::VectorXd rhs(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    A.row(i) << pts[i][0], pts[i][1], pts[i][2], 1.0;
    rhs(i) = -(pts[i][0] * pts[i][0] + pts[i][1] * pts[i][1] + pts[i][2] * pts[i][2]);
  }
  const Eigen::Vector4d x = A.colPivHouseholderQr().solve(rhs);
  const Eigen::Vector3d c = -0.5 * x.head<3>();
  const double r = std::sqrt(c.squaredNorm() - x(3));
  double worst = 0.0;
  for (const auto& p : pts) worst = std::max(worst, std::abs((Eigen::Vector3d(p[0], p[1], p[2]) - c).norm() - r));
  return worst;
}

TEST(Synthetic, BarbellPartsLieOnSpheres) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const PointCloud c = generate(SyntheticSpec::defaults(ShapeFamily::kBarbell, 2048, seed));
    for (std::size_t part : {0u, 1u}) {
      std::vector<Point3> pts;
      for (std::size_t i = 0; i < c.size(); ++i)
        if (c.labels[i] == part) pts.push_back(c.points[i]);
      EXPECT_LE(sphere_fit_residual(pts), 1e-9) << "seed " << seed << " part " << part;
    }
  }
}

TEST(Synthetic, JitterMovesPointsOffTheSphere) {
  const PointCloud c = generate(SyntheticSpec::defaults(ShapeFamily::kBarbell, 2048, 1, 0.01));
  std::vector<Point3> pts;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c.labels[i] == 0) pts.push_back(c.points[i]);
  EXPECT_GT(sphere_fit_residual(pts), 1e-4);
}

TEST(Synthetic, BadPartCountsAreRejected) {
  SyntheticSpec spec = SyntheticSpec::defaults(ShapeFamily::kBarbell, 100, 0);
  spec.part_counts = {50, 49};
  EXPECT_THROW(generate(spec), InvalidArgument);
  spec.part_counts = {100};
  EXPECT_THROW(generate(spec), InvalidArgument);
  EXPECT_THROW(parse_family("teapot"), InvalidArgument);
  EXPECT_EQ(parse_family("two-sphere-barbell"), ShapeFamily::kBarbell);
}

// ---- checkpoints ----

ParameterStore trained_miniature() {
  const ModelConfig cfg = ModelConfig::miniature();
  ParameterStore store;
  init_model_parameters(store, cfg, 3);
  for (auto& [name, e] : store) {
    if (!e.trainable) continue;
    for (std::size_t i = 0; i < e.grad.size(); ++i) e.grad[i] = std::sin(static_cast<double>(i + name.size()));
  }
  adam_step(store, AdamConfig{});
  adam_step(store, AdamConfig{});
  return store;
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir dir("ckpt");
  const ParameterStore store = trained_miniature();
  const std::map<std::string, std::string> meta{{"epoch", "3"}, {"note", "two words"}};
  save_checkpoint(store, meta, dir / "a.pcaps");
  const Checkpoint loaded = load_checkpoint(dir / "a.pcaps");
  EXPECT_EQ(loaded.metadata, meta);
  EXPECT_TRUE(stores_bitwise_equal(loaded.store, store));
  save_checkpoint(loaded.store, loaded.metadata, dir / "b.pcaps");
  EXPECT_EQ(slurp(dir / "a.pcaps"), slurp(dir / "b.pcaps"));
}

TEST(Checkpoint, HeaderIsReadableText) {
  TempDir dir("ckpt");
  save_checkpoint(trained_miniature(), {}, dir / "a.pcaps");
  const std::string data = slurp(dir / "a.pcaps");
  EXPECT_EQ(data.rfind("PCAPS 1\nstep 2\n", 0), 0u);
  EXPECT_NE(data.find("end_header\n"), std::string::npos);
}

TEST(Checkpoint, RestoreIntoFreshStore) {
  TempDir dir("ckpt");
  const ParameterStore store = trained_miniature();
  save_checkpoint(store, {}, dir / "a.pcaps");
  ParameterStore fresh;
  init_model_parameters(fresh, ModelConfig::miniature(), 99);
  restore_into(fresh, load_checkpoint(dir / "a.pcaps").store);
  EXPECT_TRUE(stores_bitwise_equal(fresh, store));
}

TEST(Checkpoint, CorruptedMagic) {
  TempDir dir("ckpt");
  save_checkpoint(trained_miniature(), {}, dir / "a.pcaps");
  std::string data = slurp(dir / "a.pcaps");
  data[0] = 'X';
  spit(dir / "a.pcaps", data);
  EXPECT_THROW(load_checkpoint(dir / "a.pcaps"), CheckpointMagicError);
}

TEST(Checkpoint, VersionMismatch) {
  TempDir dir("ckpt");
  save_checkpoint(trained_miniature(), {}, dir / "a.pcaps");
  std::string data = slurp(dir / "a.pcaps");
  data.replace(0, 7, "PCAPS 9");
  spit(dir / "a.pcaps", data);
  EXPECT_THROW(load_checkpoint(dir / "a.pcaps"), CheckpointVersionError);
}

TEST(Checkpoint, TruncatedBody) {
  TempDir dir("ckpt");
  save_checkpoint(trained_miniature(), {}, dir / "a.pcaps");
  const std::string data = slurp(dir / "a.pcaps");
  spit(dir / "a.pcaps", data.substr(0, data.size() - 5));
  EXPECT_THROW(load_checkpoint(dir / "a.pcaps"), CheckpointTruncatedError);
  spit(dir / "a.pcaps", data.substr(0, 20));
  EXPECT_THROW(load_checkpoint(dir / "a.pcaps"), CheckpointTruncatedError);
}

TEST(Checkpoint, TrailingBytes) {
  TempDir dir("ckpt");
  save_checkpoint(trained_miniature(), {}, dir / "a.pcaps");
  spit(dir / "a.pcaps", slurp(dir / "a.pcaps") + "xx");
  EXPECT_THROW(load_checkpoint(dir / "a.pcaps"), CheckpointFormatError);
}

TEST(Checkpoint, ShapeDisagreement) {
  TempDir dir("ckpt");
  save_checkpoint(trained_miniature(), {}, dir / "a.pcaps");
  ModelConfig other = ModelConfig::miniature();
  other.routing.latent_dim = 6;
  other.decoder.mlp_widths.front() = 8;
  ParameterStore store;
  init_model_parameters(store, other, 1);
  EXPECT_THROW(restore_into(store, load_checkpoint(dir / "a.pcaps").store), CheckpointShapeError);
}

TEST(Checkpoint, MissingFile) {
  EXPECT_THROW(load_checkpoint("/nonexistent/x.pcaps"), IoError);
}

// ---- run configuration ----

TEST(RunConfig, DefaultsRoundTripThroughText) {
  RunConfig cfg;
  cfg.set("routing.mode", "conv-ablation");
  cfg.set("encoder.mlp_widths", "3, 32,64");
  cfg.set("train.learning_rate", "0.00025");
  cfg.set("data.families", "barbell,torus-on-box");
  const RunConfig back = RunConfig::parse(cfg.to_text());
  EXPECT_EQ(back.to_text(), cfg.to_text());
  EXPECT_EQ(back.model.encoder.mlp_widths, (std::vector<std::size_t>{3, 32, 64}));
  EXPECT_EQ(back.train.adam.learning_rate, 0.00025);
  EXPECT_EQ(back.model.routing.mode, RoutingMode::kConvAblation);
}

TEST(RunConfig, EveryKeyIsReadableAndWritable) {
  RunConfig cfg;
  for (const auto& info : RunConfig::keys()) {
    const std::string v = cfg.get(info.key);
    EXPECT_NO_THROW(cfg.set(info.key, v)) << info.key;
    EXPECT_FALSE(info.description.empty()) << info.key;
  }
}

TEST(RunConfig, ErrorsNameTheLine) {
  try {
    RunConfig::parse("run.seed = 3\n# note\nbogus.key = 1\n", "cfg.txt");
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("cfg.txt:3:"), std::string::npos) << e.what();
  }
  EXPECT_THROW(RunConfig::parse("train.epochs = ten\n"), InvalidArgument);
  EXPECT_THROW(RunConfig::parse("train.epochs\n"), InvalidArgument);
  EXPECT_THROW(RunConfig::parse("run.seed = 1\nrun.seed = 2\n"), InvalidArgument);
  EXPECT_THROW(RunConfig::parse("routing.mode = fancy\n"), InvalidArgument);
}

TEST(RunConfig, CommentsAndWhitespace) {
  const RunConfig cfg = RunConfig::parse("  run.seed=12   # trailing\n\n\ttrain.shuffle = false\n");
  EXPECT_EQ(cfg.seed, 12u);
  EXPECT_FALSE(cfg.train.shuffle);
}

TEST(RunConfig, ModelMetadataRebuildsTheModel) {
  RunConfig a;
  a.set("routing.latent_count", "8");
  a.set("decoder.replicas", "4");
  a.set("run.seed", "5");
  RunConfig b;
  b.apply_metadata(a.model_metadata());
  EXPECT_EQ(b.model.routing.latent_count, 8u);
  EXPECT_EQ(b.model.decoder.replicas, 4u);
  EXPECT_EQ(a.model_metadata().at("run.seed"), "5");
}

TEST(RunConfig, ValidationCatchesBadCombinations) {
  RunConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.train.batch_size = 1;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = RunConfig{};
  cfg.filter_k = 4;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

}  // namespace
}  // namespace pcaps
