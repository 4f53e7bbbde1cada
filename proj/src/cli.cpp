#include "pcaps/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "pcaps/checkpoint.hpp"
#include "pcaps/error.hpp"
#include "pcaps/gradcheck.hpp"
#include "pcaps/metrics.hpp"
#include "pcaps/parameter_store.hpp"
#include "pcaps/random.hpp"
#include "pcaps/run_config.hpp"

namespace pcaps::cli {

namespace {

constexpr std::uint64_t kPartnetInitTag = 30;

// A bad flag combination; reported as a usage error.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::optional<int> threads;
  std::vector<std::string> overrides;
  std::string in, target, test, out, checkpoint, t, capsules, format, match = "index";
  std::optional<std::size_t> part;
  std::size_t category = 0;
};

RunConfig make_config(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : RunConfig::load(f.config);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.deterministic) cfg.deterministic = true;
  if (f.threads) cfg.threads = *f.threads;
  cfg.validate();
  return cfg;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

void require_file(const std::string& path, const char* flag) {
  require(path, flag);
  if (!std::filesystem::is_regular_file(path)) throw IoError(std::string(flag) + ": no such file " + path);
}

void require_dir(const std::string& path, const char* flag) {
  require(path, flag);
  if (!std::filesystem::is_directory(path)) throw IoError(std::string(flag) + ": no such directory " + path);
}

CloudFormat output_format(const Flags& f, const std::filesystem::path& out) {
  if (!f.format.empty()) return parse_cloud_format(f.format);
  return out.has_extension() ? cloud_format_for(out) : CloudFormat::kXyz;
}

TapeOptions tape_options(const RunConfig& cfg) {
  TapeOptions opts;
  opts.search = cfg.train.search;
  opts.threads = cfg.deterministic ? 1 : cfg.threads;
  return opts;
}

// Model (and partnet, when the checkpoint has one) restored from a file;
// the configuration keys stored with it take precedence.
struct Loaded {
  RunConfig cfg;
  ParameterStore store;
  bool has_partnet = false;
  std::size_t epoch = 0;
};

Loaded load_model(const std::string& path, RunConfig cfg) {
  Checkpoint ckpt = load_checkpoint(path);
  cfg.apply_metadata(ckpt.metadata);
  cfg.validate();
  Loaded out{cfg, ParameterStore{}, ckpt.metadata.count("partnet.part_count") != 0, 0};
  init_model_parameters(out.store, cfg.model, 0);
  if (out.has_partnet) {
    Rng rng(0);
    add_partnet_parameters(out.store, cfg.partnet, cfg.model.routing.latent_dim, rng);
  }
  restore_into(out.store, ckpt.store);
  if (const auto it = ckpt.metadata.find("epoch"); it != ckpt.metadata.end()) out.epoch = std::stoull(it->second);
  return out;
}

PointCloud load_input_cloud(const std::string& path, const RunConfig& cfg) {
  return prepare_cloud(read_cloud(path), cfg.model.encoder.n_points, derive_seed(cfg.seed, {21, 0}));
}

PatchGrid eval_grid(const RunConfig& cfg) {
  return sample_grid(cfg.model.decoder, cfg.model.routing.latent_count, cfg.eval_grid_seed);
}

std::vector<std::size_t> parse_indices(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (ec != std::errc() || ptr != item.data() + item.size()) {
      throw UsageError("--capsules expects comma-separated indices, got '" + text + "'");
    }
    out.push_back(value);
  }
  return out;
}

std::string format_real(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

// ---- verbs ----

int gen_data(const Flags& f, std::ostream& out) {
  const RunConfig cfg = make_config(f);
  require(f.out, "--out");
  DataConfig data = cfg.data;
  if (!f.format.empty()) data.format = parse_cloud_format(f.format);
  const auto clouds = generate_dataset(data, cfg.model.encoder.n_points, cfg.seed);
  const auto paths = write_dataset(clouds, data, f.out);
  out << "wrote " << paths.size() << " shapes to " << f.out << '\n';
  return kExitOk;
}

int train(const Flags& f, std::ostream& out) {
  RunConfig cfg = make_config(f);
  const std::string data_dir = f.in.empty() ? cfg.data_dir.string() : f.in;
  require_dir(data_dir, "--in");
  require(f.out, "--out");
  if (!f.checkpoint.empty()) require_file(f.checkpoint, "--checkpoint");

  ParameterStore store;
  std::size_t start_epoch = 0;
  if (!f.checkpoint.empty()) {
    Loaded loaded = load_model(f.checkpoint, cfg);
    cfg = loaded.cfg;
    store = std::move(loaded.store);
    start_epoch = loaded.epoch;
  } else {
    init_model_parameters(store, cfg.model, cfg.seed);
  }
  const Dataset data = read_dataset(data_dir, cfg.model.encoder.n_points, cfg.seed);
  cfg.checkpoint_dir = f.out;
  std::filesystem::create_directories(f.out);
  {
    std::ofstream conf(std::filesystem::path(f.out) / "config.txt", std::ios::trunc);
    conf << cfg.to_text();
  }
  const TrainReport report = train_ae(data.clouds, cfg.model, cfg.train_config(), store, start_epoch, &out);
  out << "final " << report.final_checkpoint.string() << '\n';
  return kExitOk;
}

int eval(const Flags& f, std::ostream& out) {
  const RunConfig base = make_config(f);
  require_file(f.checkpoint, "--checkpoint");
  const std::string data_dir = f.in.empty() ? base.data_dir.string() : f.in;
  require_dir(data_dir, "--in");
  Loaded m = load_model(f.checkpoint, base);
  const Dataset data = read_dataset(data_dir, m.cfg.model.encoder.n_points, m.cfg.seed);
  const EvalResult r = eval_ae(data.clouds, m.cfg.model, m.store, m.cfg.eval_grid_seed, tape_options(m.cfg));
  std::ostringstream line;
  line << "chamfer " << format_real(r.mean.value) << " chamfer_x1000 " << format_real(r.mean_x1000) << " spread "
       << format_real(r.mean_spread) << " shapes " << r.per_shape.size() << '\n';
  out << line.str();
  if (!f.out.empty()) {
    std::ofstream file(f.out, std::ios::trunc);
    file << line.str();
    for (std::size_t i = 0; i < r.per_shape.size(); ++i) {
      file << "shape " << data.files[i].filename().string() << ' ' << format_real(r.per_shape[i]) << '\n';
    }
  }
  return kExitOk;
}

int reconstruct_verb(const Flags& f, std::ostream& out) {
  const RunConfig base = make_config(f);
  require_file(f.in, "--in");
  require_file(f.checkpoint, "--checkpoint");
  require(f.out, "--out");
  const CloudFormat format = output_format(f, f.out);
  Loaded m = load_model(f.checkpoint, base);
  const PointCloud cloud = load_input_cloud(f.in, m.cfg);
  const LatentCapsules latent = encode_latent(cloud, m.cfg.model, m.store, tape_options(m.cfg));
  const Reconstruction recon = reconstruct(latent, eval_grid(m.cfg), m.cfg.model, m.store, tape_options(m.cfg));
  write_cloud(attributed_cloud(recon), f.out, format);
  out << "chamfer " << format_real(chamfer_fast(cloud.points, PointCloud::from_tensor(recon.points).points).value)
      << '\n';
  return kExitOk;
}

void require_partnet(const Loaded& m) {
  if (!m.has_partnet) throw UsageError("--checkpoint has no part classifier; run train-partnet first");
}

int segment(const Flags& f, std::ostream& out) {
  const RunConfig base = make_config(f);
  require_file(f.in, "--in");
  require_file(f.checkpoint, "--checkpoint");
  require(f.out, "--out");
  const CloudFormat format = output_format(f, f.out);
  Loaded m = load_model(f.checkpoint, base);
  require_partnet(m);
  if (f.category >= m.cfg.partnet.category_count) throw UsageError("--category out of range");
  const PointCloud cloud = load_input_cloud(f.in, m.cfg);
  const LatentCapsules latent = encode_latent(cloud, m.cfg.model, m.store, tape_options(m.cfg));
  PointCloud seg = segment_points(latent, one_hot(f.category, m.cfg.partnet.category_count), eval_grid(m.cfg),
                                  m.cfg.model, m.store, m.cfg.partnet, m.store);
  if (m.cfg.filter_k > 1) seg = mode_filter(seg, m.cfg.filter_k);
  write_cloud(seg, f.out, format);
  out << "points " << seg.size();
  if (cloud.has_labels()) {
    const auto truth = transfer_labels(cloud, seg.to_tensor());
    const SegMetrics s = seg_metrics(seg.labels, truth, m.cfg.partnet.part_count);
    out << " accuracy " << format_real(s.accuracy) << " mean_iou " << format_real(s.mean_iou);
  }
  out << '\n';
  return kExitOk;
}

int train_partnet_verb(const Flags& f, std::ostream& out) {
  const RunConfig base = make_config(f);
  require_file(f.checkpoint, "--checkpoint");
  const std::string data_dir = f.in.empty() ? base.data_dir.string() : f.in;
  require_dir(data_dir, "--in");
  require(f.out, "--out");
  Loaded m = load_model(f.checkpoint, base);
  // Part classifier settings come from the command line, not the checkpoint.
  m.cfg.partnet = base.partnet;
  const Dataset data = read_dataset(data_dir, m.cfg.model.encoder.n_points, m.cfg.seed);
  const PatchGrid grid = eval_grid(m.cfg);
  std::vector<PartNetSample> samples;
  for (std::size_t i = 0; i < data.clouds.size(); ++i) {
    const PointCloud& cloud = data.clouds[i];
    if (!cloud.has_labels()) throw InvalidArgument(data.files[i].string() + " has no part labels");
    const std::size_t category = cloud.category.value_or(0);
    if (category >= m.cfg.partnet.category_count) {
      throw InvalidArgument(data.files[i].string() + " has category " + std::to_string(category) +
                            "; raise partnet.category_count");
    }
    PartNetSample s;
    s.latent = encode_latent(cloud, m.cfg.model, m.store, tape_options(m.cfg));
    s.category = category;
    s.labeling = gt_capsule_labels(s.latent, m.cfg.model, m.store, grid, cloud, m.cfg.partnet.part_count);
    samples.push_back(std::move(s));
  }
  ParameterStore partnet;
  Rng rng(derive_seed(m.cfg.seed, {kPartnetInitTag}));
  add_partnet_parameters(partnet, m.cfg.partnet, m.cfg.model.routing.latent_dim, rng);
  const PartNetReport report = train_partnet(samples, m.cfg.partnet, partnet);
  for (std::size_t e = 0; e < report.epoch_losses.size(); ++e) {
    out << "epoch " << e << " loss " << format_real(report.epoch_losses[e]) << " accuracy "
        << format_real(report.epoch_accuracy[e]) << '\n';
  }
  // One file holding both networks; the auto-encoder's optimizer state is kept.
  ParameterStore combined = std::move(m.store);
  for (const auto& [name, entry] : partnet) {
    ParameterEntry& e = combined.add(name, entry.value, entry.trainable);
    e.m = entry.m;
    e.v = entry.v;
  }
  auto meta = m.cfg.partnet_metadata();
  meta["epoch"] = std::to_string(m.epoch);
  const std::filesystem::path out_path(f.out);
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  save_checkpoint(combined, meta, out_path);
  out << "wrote " << f.out << '\n';
  return kExitOk;
}

struct LatentPair {
  Loaded model;
  LatentCapsules src, tgt;
  CapsuleSelection sel;
};

LatentPair latent_pair(const Flags& f, const RunConfig& base) {
  require_file(f.in, "--in");
  require_file(f.target, "--target");
  require_file(f.checkpoint, "--checkpoint");
  require(f.out, "--out");
  if (f.match != "index" && f.match != "cosine") throw UsageError("--match must be index or cosine");
  if (f.part.has_value() == !f.capsules.empty()) throw UsageError("give exactly one of --part or --capsules");
  if (f.part && f.match == "cosine") throw UsageError("--match cosine applies to --capsules");
  LatentPair p{load_model(f.checkpoint, base), {}, {}, {}};
  const RunConfig& cfg = p.model.cfg;
  p.src = encode_latent(load_input_cloud(f.in, cfg), cfg.model, p.model.store, tape_options(cfg));
  p.tgt = encode_latent(load_input_cloud(f.target, cfg), cfg.model, p.model.store, tape_options(cfg));
  if (f.part) {
    require_partnet(p.model);
    if (f.category >= cfg.partnet.category_count) throw UsageError("--category out of range");
    const auto onehot = one_hot(f.category, cfg.partnet.category_count);
    const CapsuleLabeling a{predict_capsule_parts(p.src, onehot, cfg.partnet, p.model.store), cfg.partnet.part_count};
    const CapsuleLabeling b{predict_capsule_parts(p.tgt, onehot, cfg.partnet, p.model.store), cfg.partnet.part_count};
    p.sel = match_part_capsules(a, b, *f.part);
  } else if (f.match == "cosine") {
    p.sel = match_capsules_by_cosine(p.src, p.tgt, parse_indices(f.capsules));
  } else {
    p.sel.indices = parse_indices(f.capsules);
  }
  p.sel.validate(cfg.model.routing.latent_count);
  return p;
}

PointCloud decode_cloud(const LatentCapsules& latent, Loaded& m) {
  return attributed_cloud(reconstruct(latent, eval_grid(m.cfg), m.cfg.model, m.store, tape_options(m.cfg)));
}

int interpolate(const Flags& f, std::ostream& out) {
  const RunConfig base = make_config(f);
  require(f.t, "--t");
  std::optional<double> t;
  if (f.t != "all") {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(f.t.data(), f.t.data() + f.t.size(), value);
    if (ec != std::errc() || ptr != f.t.data() + f.t.size()) throw UsageError("--t expects a number or 'all'");
    if (!(value >= 0.0 && value <= 1.0)) throw UsageError("--t must lie in [0, 1]");
    t = value;
  }
  LatentPair p = latent_pair(f, base);
  out << "capsules " << p.sel.indices.size() << '\n';
  if (t) {
    const CloudFormat format = output_format(f, f.out);
    write_cloud(decode_cloud(interpolate_part(p.src, p.tgt, p.sel, *t), p.model), f.out, format);
    out << "wrote " << f.out << '\n';
    return kExitOk;
  }
  const CloudFormat format = f.format.empty() ? CloudFormat::kPlyAscii : parse_cloud_format(f.format);
  std::vector<PointCloud> frames;
  for (const auto& latent : interpolation_sequence(p.src, p.tgt, p.sel, p.model.cfg.interpolation_steps)) {
    frames.push_back(decode_cloud(latent, p.model));
  }
  const auto paths = write_sequence(frames, f.out, "interp", format);
  out << "wrote " << paths.size() << " frames to " << f.out << '\n';
  return kExitOk;
}

int replace(const Flags& f, std::ostream& out) {
  const RunConfig base = make_config(f);
  LatentPair p = latent_pair(f, base);
  const CloudFormat format = output_format(f, f.out);
  write_cloud(decode_cloud(replace_part(p.src, p.tgt, p.sel), p.model), f.out, format);
  out << "capsules " << p.sel.indices.size() << "\nwrote " << f.out << '\n';
  return kExitOk;
}

int classify(const Flags& f, std::ostream& out) {
  const RunConfig base = make_config(f);
  require_file(f.checkpoint, "--checkpoint");
  const std::string train_dir = f.in.empty() ? base.data_dir.string() : f.in;
  require_dir(train_dir, "--in");
  require_dir(f.test, "--test");
  Loaded m = load_model(f.checkpoint, base);
  auto features = [&](const Dataset& d, std::vector<std::vector<double>>& x, std::vector<std::size_t>& y) {
    for (std::size_t i = 0; i < d.clouds.size(); ++i) {
      if (!d.clouds[i].category) throw InvalidArgument(d.files[i].string() + " has no category (missing manifest)");
      x.push_back(flatten_latent(encode_latent(d.clouds[i], m.cfg.model, m.store, tape_options(m.cfg))));
      y.push_back(*d.clouds[i].category);
    }
  };
  std::vector<std::vector<double>> xtr, xte;
  std::vector<std::size_t> ytr, yte;
  features(read_dataset(train_dir, m.cfg.model.encoder.n_points, m.cfg.seed), xtr, ytr);
  features(read_dataset(f.test, m.cfg.model.encoder.n_points, derive_seed(m.cfg.seed, {1})), xte, yte);
  const LinearClassifier clf = train_linear_classifier(xtr, ytr, m.cfg.classifier);
  std::map<std::size_t, std::size_t> counts;
  for (auto y : yte) ++counts[y];
  std::size_t majority = 0;
  for (const auto& [_, c] : counts) majority = std::max(majority, c);
  std::ostringstream line;
  line << "train_accuracy " << format_real(classifier_accuracy(clf, xtr, ytr)) << " test_accuracy "
       << format_real(classifier_accuracy(clf, xte, yte)) << " majority_baseline "
       << format_real(static_cast<double>(majority) / static_cast<double>(yte.size())) << '\n';
  out << line.str();
  if (!f.out.empty()) {
    std::ofstream file(f.out, std::ios::trunc);
    file << line.str();
  }
  return kExitOk;
}

int gradcheck(const Flags& f, std::ostream& out) {
  const RunConfig cfg = make_config(f);
  const auto results = run_gradient_suite(cfg.seed);
  std::size_t failed = 0;
  for (const auto& r : results) {
    out << "case " << r.name << " max_error " << format_real(r.max_error) << " checked " << r.checked
        << " skipped " << r.skipped << (r.passed ? " pass" : " FAIL") << '\n';
    failed += !r.passed;
  }
  if (failed > 0) {
    throw Error(std::to_string(failed) + " of " + std::to_string(results.size()) + " gradient checks failed");
  }
  out << "all " << results.size() << " gradient checks passed\n";
  return kExitOk;
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const CheckpointMagicError*>(&e)) return "checkpoint-magic";
  if (dynamic_cast<const CheckpointVersionError*>(&e)) return "checkpoint-version";
  if (dynamic_cast<const CheckpointTruncatedError*>(&e)) return "checkpoint-truncated";
  if (dynamic_cast<const CheckpointShapeError*>(&e)) return "checkpoint-shape";
  if (dynamic_cast<const CheckpointFormatError*>(&e)) return "checkpoint-format";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const EmptySelectionError*>(&e)) return "empty-selection";
  if (dynamic_cast<const InvalidArgument*>(&e)) return "invalid-argument";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const NonFiniteError*>(&e)) return "non-finite";
  if (dynamic_cast<const Error*>(&e)) return "failed";
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return "io";
  return "internal";
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Point-cloud capsule auto-encoder", "pcaps"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "Run configuration file (key = value lines)");
    sub->add_option("--seed", f.seed, "Run seed (overrides run.seed)");
    sub->add_flag("--deterministic", f.deterministic, "Single-threaded, bit-reproducible execution");
    sub->add_option("--threads", f.threads, "Worker thread cap (overrides run.threads)")->check(CLI::PositiveNumber);
    sub->add_option("--set", f.overrides, "Override a configuration key: --set key=value (repeatable)");
  };
  auto selection = [&](CLI::App* sub) {
    sub->add_option("--in", f.in, "Source point cloud");
    sub->add_option("--target", f.target, "Target point cloud");
    sub->add_option("--checkpoint", f.checkpoint, "Model checkpoint");
    sub->add_option("--out", f.out, "Output file (directory for --t all)");
    sub->add_option("--part", f.part, "Move the capsules predicted as this part in both shapes");
    sub->add_option("--capsules", f.capsules, "Comma-separated capsule indices to move");
    sub->add_option("--match", f.match, "Pairing of --capsules: index (same index) or cosine");
    sub->add_option("--category", f.category, "Category index fed to the part classifier");
    sub->add_option("--format", f.format, "Output format: xyz or ply");
  };

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic labeled dataset");
  common(gen);
  gen->add_option("--out", f.out, "Output directory");
  gen->add_option("--format", f.format, "xyz or ply (overrides data.format)");

  auto* tr = app.add_subcommand("train", "Train the auto-encoder");
  common(tr);
  tr->add_option("--in", f.in, "Dataset directory (default paths.data_dir)");
  tr->add_option("--out", f.out, "Checkpoint directory");
  tr->add_option("--checkpoint", f.checkpoint, "Resume from this checkpoint");

  auto* ev = app.add_subcommand("eval", "Mean Chamfer distance and capsule spread of a dataset");
  common(ev);
  ev->add_option("--in", f.in, "Dataset directory (default paths.data_dir)");
  ev->add_option("--checkpoint", f.checkpoint, "Model checkpoint");
  ev->add_option("--out", f.out, "Optional report file");

  auto* rec = app.add_subcommand("reconstruct", "Reconstruct one cloud, labeled by capsule");
  common(rec);
  rec->add_option("--in", f.in, "Input point cloud");
  rec->add_option("--checkpoint", f.checkpoint, "Model checkpoint");
  rec->add_option("--out", f.out, "Output point cloud");
  rec->add_option("--format", f.format, "xyz or ply (default from the extension)");

  auto* seg = app.add_subcommand("segment", "Per-point part labels of one cloud");
  common(seg);
  seg->add_option("--in", f.in, "Input point cloud");
  seg->add_option("--checkpoint", f.checkpoint, "Checkpoint written by train-partnet");
  seg->add_option("--out", f.out, "Labeled output cloud");
  seg->add_option("--category", f.category, "Category index of the input");
  seg->add_option("--format", f.format, "xyz or ply (default from the extension)");

  auto* tp = app.add_subcommand("train-partnet", "Train the capsule part classifier");
  common(tp);
  tp->add_option("--in", f.in, "Labeled dataset directory (default paths.data_dir)");
  tp->add_option("--checkpoint", f.checkpoint, "Auto-encoder checkpoint");
  tp->add_option("--out", f.out, "Checkpoint holding both networks");

  auto* ip = app.add_subcommand("interpolate", "Interpolate selected capsules from source to target");
  common(ip);
  selection(ip);
  ip->add_option("--t", f.t, "Interpolation weight in [0, 1], or 'all' for interpolate.steps frames");

  auto* rp = app.add_subcommand("replace", "Swap selected capsules of the source for the target's");
  common(rp);
  selection(rp);

  auto* cl = app.add_subcommand("classify", "Linear classifier on flattened latent capsules");
  common(cl);
  cl->add_option("--in", f.in, "Training dataset directory (default paths.data_dir)");
  cl->add_option("--test", f.test, "Held-out dataset directory");
  cl->add_option("--checkpoint", f.checkpoint, "Model checkpoint");
  cl->add_option("--out", f.out, "Optional report file");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  common(gc);

  if (!args.empty() && !args.front().empty() && args.front().front() != '-' &&
      app.get_subcommand_no_throw(args.front()) == nullptr) {
    err << "error: usage: unknown verb '" << one_line(args.front()) << "'\n";
    out << app.help();
    return kExitUsage;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << '\n';
    out << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return gen_data(f, out);
    if (tr->parsed()) return train(f, out);
    if (ev->parsed()) return eval(f, out);
    if (rec->parsed()) return reconstruct_verb(f, out);
    if (seg->parsed()) return segment(f, out);
    if (tp->parsed()) return train_partnet_verb(f, out);
    if (ip->parsed()) return interpolate(f, out);
    if (rp->parsed()) return replace(f, out);
    if (cl->parsed()) return classify(f, out);
    if (gc->parsed()) return gradcheck(f, out);
  } catch (const std::exception& e) {
    const std::string kind = error_kind(e);
    err << "error: " << kind << ": " << one_line(e.what()) << '\n';
    return kind == "usage" ? kExitUsage : kExitFailure;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace pcaps::cli
