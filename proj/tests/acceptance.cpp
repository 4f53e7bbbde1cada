// End-to-end acceptance run. Prints one line per criterion and exits
// non-zero if any criterion fails. Criteria can be selected by number on the
// command line; no arguments runs all of them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pcaps/chamfer.hpp"
#include "pcaps/cli.hpp"
#include "pcaps/dataset.hpp"
#include "pcaps/gradcheck.hpp"
#include "pcaps/latent_ops.hpp"
#include "pcaps/metrics.hpp"
#include "pcaps/model.hpp"
#include "pcaps/parameter_store.hpp"
#include "pcaps/partseg.hpp"
#include "pcaps/random.hpp"
#include "pcaps/synthetic.hpp"
#include "pcaps/trainer.hpp"
#include "test_util.hpp"

namespace pcaps {
namespace {

using testing::TempDir;

constexpr std::uint64_t kEvalGridSeed = 0;

struct Outcome {
  bool passed = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* format, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

PointCloud shuffled(const PointCloud& cloud, std::uint64_t seed) {
  std::vector<std::size_t> idx(cloud.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  PointCloud out;
  for (std::size_t i : idx) out.points.push_back(cloud.points[i]);
  return out;
}

std::vector<PointCloud> family_shapes(ShapeFamily family, std::size_t count, std::uint64_t first_seed) {
  std::vector<PointCloud> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate(SyntheticSpec::defaults(family, 2048, first_seed + i)));
  return out;
}

TrainConfig pinned_train(std::size_t epochs, std::size_t batch, double lr, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.adam.learning_rate = lr;
  cfg.deterministic = true;
  cfg.seed = seed;
  return cfg;
}

// ---- 1 ----

Outcome gradient_suite_criterion() {
  Stopwatch clock;
  const auto results = run_gradient_suite(1);
  const double secs = clock.seconds();
  std::size_t failed = 0;
  double worst = 0.0;
  std::string first_failure;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_error);
    if (!r.passed) {
      if (failed++ == 0) first_failure = r.name;
    }
  }
  Outcome o;
  o.passed = failed == 0 && secs < 60.0;
  o.detail = fmt("%zu cases, max rel error %.2e, %.1f s", results.size(), worst, secs);
  if (failed) o.detail += ", " + std::to_string(failed) + " failed (first: " + first_failure + ")";
  return o;
}

// ---- 2 ----

Outcome routing_invariants_criterion() {
  ModelConfig cfg;
  ParameterStore store;
  init_model_parameters(store, cfg, 3);
  const PointCloud cloud = generate(SyntheticSpec::defaults(ShapeFamily::kWingedCross, 2048, 5));
  const PrimaryCapsules ppc = encode_primary(cloud, cfg.encoder, store);
  RoutingState state;
  const LatentCapsules latent = route(ppc, cfg.routing, store, &state);

  double worst_row = 0.0;
  bool nonnegative = true;
  for (const auto& c : state.couplings)
    for (std::size_t i = 0; i < c.rows(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < c.cols(); ++j) {
        nonnegative = nonnegative && c.at(i, j) >= 0.0;
        sum += c.at(i, j);
      }
      worst_row = std::max(worst_row, std::abs(sum - 1.0));
    }
  double max_norm = 0.0;
  for (std::size_t j = 0; j < latent.capsules.rows(); ++j) {
    double n = 0.0;
    for (std::size_t d = 0; d < latent.capsules.cols(); ++d) n += latent.capsules.at(j, d) * latent.capsules.at(j, d);
    max_norm = std::max(max_norm, std::sqrt(n));
  }

  const bool encode_invariant =
      bitwise_equal(encode_latent(cloud, cfg, store).capsules, encode_latent(shuffled(cloud, 8), cfg, store).capsules);
  Tensor permuted_ppc(ppc.capsules.shape());
  std::vector<std::size_t> idx(ppc.capsules.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(9);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t k = 0; k < ppc.capsules.cols(); ++k) permuted_ppc.at(i, k) = ppc.capsules.at(idx[i], k);
  const bool route_invariant =
      bitwise_equal(route(PrimaryCapsules{permuted_ppc}, cfg.routing, store).capsules, latent.capsules);

  Outcome o;
  o.passed = state.couplings.size() == cfg.routing.iterations && worst_row <= 1e-9 && nonnegative &&
             max_norm < 1.0 && encode_invariant && route_invariant;
  o.detail = fmt("max |row sum - 1| %.1e, max norm %.6f, encode permutation %s, route permutation %s", worst_row,
                 max_norm, encode_invariant ? "exact" : "differs", route_invariant ? "exact" : "differs");
  return o;
}

// ---- 3 ----

double brute_directed(const std::vector<Point3>& a, const std::vector<Point3>& b) {
  double total = 0.0;
  for (const auto& p : a) {
    double best = INFINITY;
    for (const auto& q : b) best = std::min(best, std::hypot(p[0] - q[0], p[1] - q[1], p[2] - q[2]));
    total += best;
  }
  return total / static_cast<double>(a.size());
}

Outcome chamfer_oracle_criterion() {
  Rng rng(2024);
  double worst = 0.0;
  for (int pair = 0; pair < 200; ++pair) {
    std::vector<Point3> x(1 + rng.below(256)), y(1 + rng.below(256));
    for (auto* set : {&x, &y})
      for (auto& p : *set) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double oracle = brute_directed(x, y) + brute_directed(y, x);
    worst = std::max(worst, std::abs(chamfer_fast(x, y).value - oracle));
  }
  const std::vector<Point3> a{{0, 0, 0}}, b{{1, 0, 0}};
  const std::vector<Point3> c{{0, 0, 0}, {1, 0, 0}}, d{{0, 0, 0}};
  const bool fixtures = chamfer(a, b).value == 2.0 && chamfer_fast(a, b).value == 2.0 &&
                        chamfer(c, d).value == 0.5 && chamfer_fast(c, d).value == 0.5;
  Outcome o;
  o.passed = worst <= 1e-9 && fixtures;
  o.detail = fmt("200 pairs, max |fast - brute| %.1e, fixtures %s", worst, fixtures ? "exact" : "wrong");
  return o;
}

// ---- 4 ----

Outcome shape_contract_criterion() {
  ModelConfig cfg;
  ParameterStore store;
  init_model_parameters(store, cfg, 4);
  const PointCloud cloud = generate(SyntheticSpec::defaults(ShapeFamily::kTorusOnBox, 2048, 2));
  const PrimaryCapsules ppc = encode_primary(cloud, cfg.encoder, store);
  const LatentCapsules latent = encode_latent(cloud, cfg, store);
  const Reconstruction rec = reconstruct(latent, sample_grid(cfg.decoder, 64, kEvalGridSeed), cfg, store);
  std::vector<std::size_t> per_capsule(64, 0);
  bool in_range = rec.attribution.size() == rec.points.rows();
  for (std::size_t k : rec.attribution) {
    if (k < 64) ++per_capsule[k];
    else in_range = false;
  }
  const bool partition = in_range && std::all_of(per_capsule.begin(), per_capsule.end(), [](std::size_t n) {
                           return n == 32;
                         });
  Outcome o;
  o.passed = ppc.capsules.shape() == Shape{1024, 16} && latent.capsules.shape() == Shape{64, 64} &&
             rec.points.shape() == Shape{2048, 3} && partition;
  o.detail = "primary " + shape_string(ppc.capsules.shape()) + ", latent " + shape_string(latent.capsules.shape()) +
             ", points " + shape_string(rec.points.shape()) + ", partition " + (partition ? "64x32" : "broken");
  return o;
}

// ---- 5 and 6 ----

struct OverfitRun {
  double chamfer = 0.0;
  double spread = 0.0;
  double seconds = 0.0;
};

// Four shapes, one per family, trained with batch 4 and lr 1e-4.
OverfitRun overfit_run(RoutingMode mode, std::uint64_t seed) {
  const std::vector<PointCloud> data = generate_dataset(DataConfig{}, 2048, seed);
  ModelConfig model;
  model.routing.mode = mode;
  ParameterStore store;
  init_model_parameters(store, model, seed);
  TrainConfig train = pinned_train(300, 4, 1e-4, seed);
  Stopwatch clock;
  train_ae(data, model, train, store);
  OverfitRun run;
  run.seconds = clock.seconds();
  const EvalResult eval = eval_ae(data, model, store, kEvalGridSeed);
  run.chamfer = eval.mean.value;
  run.spread = eval.mean_spread;
  return run;
}

constexpr std::uint64_t kOverfitSeeds[] = {7, 8, 9};

OverfitRun& dynamic_run(std::size_t i) {
  static std::vector<std::optional<OverfitRun>> cache(3);
  if (!cache[i]) cache[i] = overfit_run(RoutingMode::kDynamic, kOverfitSeeds[i]);
  return *cache[i];
}

Outcome overfit_criterion() {
  const OverfitRun& run = dynamic_run(0);
  Outcome o;
  o.passed = run.chamfer < 0.1 && run.seconds < 15 * 60;
  o.detail = fmt("eval chamfer %.5f (< 0.1), %.0f s", run.chamfer, run.seconds);
  return o;
}

Outcome ablation_trend_criterion() {
  int wins = 0;
  std::string detail;
  for (std::size_t i = 0; i < 3; ++i) {
    const OverfitRun& dyn = dynamic_run(i);
    const OverfitRun abl = overfit_run(RoutingMode::kConvAblation, kOverfitSeeds[i]);
    if (dyn.spread < abl.spread) ++wins;
    detail += fmt("%sseed %llu dynamic %.4f ablation %.4f", i ? ", " : "",
                  static_cast<unsigned long long>(kOverfitSeeds[i]), dyn.spread, abl.spread);
  }
  Outcome o;
  o.passed = wins >= 2;
  o.detail = std::to_string(wins) + "/3 seeds lower; " + detail;
  return o;
}

// ---- 7 ----

Outcome part_pipeline_criterion() {
  Stopwatch clock;
  const ModelConfig model;
  ParameterStore store;
  init_model_parameters(store, model, 11);
  const auto train_shapes = family_shapes(ShapeFamily::kBarbell, 8, 100);
  train_ae(train_shapes, model, pinned_train(120, 4, 1e-3, 11), store);
  const PatchGrid grid = sample_grid(model.decoder, model.routing.latent_count, kEvalGridSeed);

  PartNetConfig partnet;
  partnet.category_count = 1;
  partnet.part_count = family_part_count(ShapeFamily::kBarbell);
  std::vector<PartNetSample> samples;
  for (const auto& cloud : train_shapes) {
    const LatentCapsules latent = encode_latent(cloud, model, store);
    samples.push_back({latent, 0, gt_capsule_labels(latent, model, store, grid, cloud, partnet.part_count)});
  }
  ParameterStore partnet_store;
  Rng rng(derive_seed(11, {30}));
  add_partnet_parameters(partnet_store, partnet, model.routing.latent_dim, rng);
  train_partnet(samples, partnet, partnet_store);

  const std::vector<double> category = one_hot(0, 1);
  std::size_t capsule_hits = 0, capsule_total = 0;
  double point_accuracy = 0.0, mean_iou = 0.0;
  const auto held_out = family_shapes(ShapeFamily::kBarbell, 4, 500);
  for (const auto& cloud : held_out) {
    const LatentCapsules latent = encode_latent(cloud, model, store);
    const CapsuleLabeling truth = gt_capsule_labels(latent, model, store, grid, cloud, partnet.part_count);
    const auto predicted = predict_capsule_parts(latent, category, partnet, partnet_store);
    for (std::size_t k = 0; k < predicted.size(); ++k) capsule_hits += predicted[k] == truth.labels[k];
    capsule_total += predicted.size();
    const PointCloud seg =
        mode_filter(segment_points(latent, category, grid, model, store, partnet, partnet_store), 9);
    const auto point_truth = transfer_labels(cloud, seg.to_tensor());
    const SegMetrics m = seg_metrics(seg.labels, point_truth, partnet.part_count);
    point_accuracy += m.accuracy / static_cast<double>(held_out.size());
    mean_iou += m.mean_iou / static_cast<double>(held_out.size());
  }
  const double capsule_accuracy = static_cast<double>(capsule_hits) / static_cast<double>(capsule_total);
  const double secs = clock.seconds();
  Outcome o;
  o.passed = capsule_accuracy >= 0.95 && point_accuracy >= 0.95 && mean_iou >= 0.9 && secs < 600;
  o.detail = fmt("held-out capsule accuracy %.4f, point accuracy %.4f, mean IoU %.4f, %.0f s", capsule_accuracy,
                 point_accuracy, mean_iou, secs);
  return o;
}

// ---- 8 ----

Outcome latent_ops_criterion() {
  const ModelConfig model;
  ParameterStore store;
  init_model_parameters(store, model, 13);
  const LatentCapsules src =
      encode_latent(generate(SyntheticSpec::defaults(ShapeFamily::kBarbell, 2048, 1)), model, store);
  const LatentCapsules tgt =
      encode_latent(generate(SyntheticSpec::defaults(ShapeFamily::kCappedCylinder, 2048, 2)), model, store);
  const PatchGrid grid = sample_grid(model.decoder, model.routing.latent_count, kEvalGridSeed);
  const Reconstruction src_rec = reconstruct(src, grid, model, store);
  const Reconstruction tgt_rec = reconstruct(tgt, grid, model, store);

  CapsuleSelection all;
  all.indices.resize(model.routing.latent_count);
  std::iota(all.indices.begin(), all.indices.end(), std::size_t{0});
  const bool endpoints =
      bitwise_equal(reconstruct(interpolate_part(src, tgt, all, 0.0), grid, model, store).points, src_rec.points) &&
      bitwise_equal(reconstruct(interpolate_part(src, tgt, all, 1.0), grid, model, store).points, tgt_rec.points);

  const CapsuleSelection part{{3, 17, 40, 41}};
  const std::set<std::size_t> selected(part.indices.begin(), part.indices.end());
  bool unselected_fixed = true;
  for (const auto& latent : interpolation_sequence(src, tgt, part, 9)) {
    const Reconstruction r = reconstruct(latent, grid, model, store);
    for (std::size_t row = 0; row < r.size(); ++row) {
      if (selected.count(r.attribution[row])) continue;
      for (std::size_t a = 0; a < 3; ++a) unselected_fixed = unselected_fixed && r.points.at(row, a) == src_rec.points.at(row, a);
    }
  }

  const LatentCapsules swapped = replace_part(src, tgt, part);
  const bool involution = bitwise_equal(replace_part(swapped, src, part).capsules, src.capsules);

  Outcome o;
  o.passed = endpoints && unselected_fixed && involution;
  o.detail = std::string("endpoints ") + (endpoints ? "exact" : "differ") + ", unselected patches " +
             (unselected_fixed ? "fixed" : "moved") + ", replacement involution " + (involution ? "exact" : "broken");
  return o;
}

// ---- 9 ----

Outcome transfer_criterion() {
  constexpr ShapeFamily kFamilies[] = {ShapeFamily::kBarbell, ShapeFamily::kWingedCross,
                                       ShapeFamily::kCappedCylinder};
  std::vector<PointCloud> train_shapes, test_shapes;
  std::vector<std::size_t> train_labels, test_labels;
  for (std::size_t f = 0; f < 3; ++f) {
    for (auto& c : family_shapes(kFamilies[f], 4, 1000 + 100 * f)) {
      train_shapes.push_back(std::move(c));
      train_labels.push_back(f);
    }
    for (auto& c : family_shapes(kFamilies[f], 6, 5000 + 100 * f)) {
      test_shapes.push_back(std::move(c));
      test_labels.push_back(f);
    }
  }
  const ModelConfig model;
  ParameterStore store;
  init_model_parameters(store, model, 17);
  train_ae(train_shapes, model, pinned_train(40, 4, 1e-3, 17), store);

  auto features = [&](const std::vector<PointCloud>& shapes) {
    std::vector<std::vector<double>> out;
    for (const auto& c : shapes) out.push_back(flatten_latent(encode_latent(c, model, store)));
    return out;
  };
  const auto x_train = features(train_shapes);
  const auto x_test = features(test_shapes);
  const LinearClassifier clf = train_linear_classifier(x_train, train_labels, ClassifierConfig{});
  const double accuracy = classifier_accuracy(clf, x_test, test_labels);

  std::vector<std::size_t> counts(3, 0);
  for (std::size_t y : train_labels) ++counts[y];
  const std::size_t majority =
      static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  const double baseline =
      static_cast<double>(std::count(test_labels.begin(), test_labels.end(), majority)) / test_labels.size();

  Outcome o;
  o.passed = accuracy >= 0.9 && accuracy > baseline;
  o.detail = fmt("held-out accuracy %.4f, majority baseline %.4f", accuracy, baseline);
  return o;
}

// ---- 10 ----

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Relative path to file contents for every regular file under `root`.
std::map<std::string, std::string> tree(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

struct CliRun {
  int code = 0;
  std::string out;
};

CliRun cli_call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str() + err.str()};
}

// gen-data, train, eval, reconstruct. Returns the eval and reconstruct stdout.
std::string end_to_end(const std::filesystem::path& dir, bool& ok) {
  const std::string d = dir.string();
  const std::vector<std::string> common{"--seed", "7", "--deterministic", "--set", "train.epochs=2"};
  auto call = [&](std::vector<std::string> args) {
    args.insert(args.end(), common.begin(), common.end());
    const CliRun r = cli_call(args);
    ok = ok && r.code == 0;
    return r.out;
  };
  call({"gen-data", "--out", d + "/data"});
  call({"train", "--in", d + "/data", "--out", d + "/ck"});
  std::string out = call({"eval", "--in", d + "/data", "--checkpoint", d + "/ck/final.pcaps"});
  out += call({"reconstruct", "--in", d + "/data/barbell_0.xyz", "--checkpoint", d + "/ck/final.pcaps", "--out",
               d + "/rec.ply"});
  return out;
}

Outcome determinism_criterion() {
  // Both runs use the same directory, since config.txt records the output path.
  TempDir a("accept_run");
  bool ok = true;
  const std::string out_a = end_to_end(a.path(), ok);
  const auto files_a = tree(a.path());
  std::filesystem::remove_all(a.path());
  std::filesystem::create_directories(a.path());
  const std::string out_b = end_to_end(a.path(), ok);
  const bool identical = ok && out_a == out_b && files_a == tree(a.path());

  TempDir r("accept_resume");
  const std::string data = (a.path() / "data").string();
  const std::vector<std::string> common{"--seed", "7", "--deterministic", "--in", data};
  auto train = [&](std::vector<std::string> extra) {
    std::vector<std::string> args{"train"};
    args.insert(args.end(), common.begin(), common.end());
    args.insert(args.end(), extra.begin(), extra.end());
    ok = ok && cli_call(args).code == 0;
  };
  train({"--out", (r.path() / "half").string(), "--set", "train.epochs=1"});
  train({"--out", (r.path() / "rest").string(), "--set", "train.epochs=2", "--checkpoint",
         (r.path() / "half" / "final.pcaps").string()});
  const bool resumed = ok && slurp(r.path() / "rest" / "final.pcaps") == slurp(a.path() / "ck" / "final.pcaps");

  Outcome o;
  o.passed = identical && resumed;
  o.detail = fmt("%zu files compared, runs %s, resume %s", files_a.size(), identical ? "byte-identical" : "differ",
                 resumed ? "exact" : "differs");
  return o;
}

struct Criterion {
  int number;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace pcaps

int main(int argc, char** argv) {
  using namespace pcaps;
  const std::vector<Criterion> criteria{
      {1, "gradient suite", gradient_suite_criterion},
      {2, "routing invariants", routing_invariants_criterion},
      {3, "chamfer oracle", chamfer_oracle_criterion},
      {4, "shape contract", shape_contract_criterion},
      {5, "overfit", overfit_criterion},
      {6, "ablation trend", ablation_trend_criterion},
      {7, "part pipeline", part_pipeline_criterion},
      {8, "latent ops", latent_ops_criterion},
      {9, "transfer classifier", transfer_criterion},
      {10, "determinism and resume", determinism_criterion},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.number)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.passed;
    std::printf("criterion %2d %-24s %s  %s\n", c.number, c.name, o.passed ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
