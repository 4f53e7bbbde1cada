#include "pcaps/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "pcaps/error.hpp"

namespace pcaps {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw InvalidArgument("config: bad value '" + text + "' for " + key);
  }
  return value;
}

std::size_t parse_count(const std::string& key, const std::string& text) {
  return parse_number<std::size_t>(key, text);
}

double parse_real(const std::string& key, const std::string& text) { return parse_number<double>(key, text); }

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw InvalidArgument("config: bad value '" + text + "' for " + key + " (expected true or false)");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  if (trim(text).empty()) return items;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) items.push_back(trim(item));
  return items;
}

std::vector<std::size_t> parse_counts(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) out.push_back(parse_count(key, item));
  return out;
}

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_bool(bool v) { return v ? "true" : "false"; }

template <class Seq, class F>
std::string join(const Seq& items, F format) {
  std::string out;
  for (const auto& item : items) {
    if (!out.empty()) out += ',';
    out += format(item);
  }
  return out;
}

std::string format_counts(const std::vector<std::size_t>& v) {
  return join(v, [](std::size_t x) { return std::to_string(x); });
}

struct Field {
  std::string key;
  std::string description;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define PCAPS_COUNT(key, member, doc)                                                  \
  Field {                                                                              \
    key, doc, [](const RunConfig& c) { return std::to_string(c.member); },             \
        [](RunConfig& c, const std::string& v) { c.member = parse_count(key, v); }     \
  }
#define PCAPS_SEED(key, member, doc)                                                              \
  Field {                                                                                         \
    key, doc, [](const RunConfig& c) { return std::to_string(c.member); },                        \
        [](RunConfig& c, const std::string& v) { c.member = parse_number<std::uint64_t>(key, v); } \
  }
#define PCAPS_REAL(key, member, doc)                                                 \
  Field {                                                                            \
    key, doc, [](const RunConfig& c) { return format_real(c.member); },              \
        [](RunConfig& c, const std::string& v) { c.member = parse_real(key, v); }    \
  }
#define PCAPS_BOOL(key, member, doc)                                                 \
  Field {                                                                            \
    key, doc, [](const RunConfig& c) { return format_bool(c.member); },              \
        [](RunConfig& c, const std::string& v) { c.member = parse_bool(key, v); }    \
  }
#define PCAPS_COUNTS(key, member, doc)                                               \
  Field {                                                                            \
    key, doc, [](const RunConfig& c) { return format_counts(c.member); },            \
        [](RunConfig& c, const std::string& v) { c.member = parse_counts(key, v); }  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      PCAPS_SEED("run.seed", seed, "Run seed; every random draw derives from it"),
      PCAPS_BOOL("run.deterministic", deterministic, "Single-threaded, fixed-order execution"),
      Field{"run.threads", "Worker thread cap", [](const RunConfig& c) { return std::to_string(c.threads); },
            [](RunConfig& c, const std::string& v) { c.threads = parse_number<int>("run.threads", v); }},
      PCAPS_COUNT("encoder.n_points", model.encoder.n_points, "Points per input shape"),
      PCAPS_COUNTS("encoder.mlp_widths", model.encoder.mlp_widths, "Shared point MLP widths, input first"),
      PCAPS_COUNT("encoder.branch_count", model.encoder.branch_count, "Max-pooled branches (primary capsule dim)"),
      PCAPS_COUNT("encoder.branch_width", model.encoder.branch_width, "Channels per branch (primary capsule count)"),
      PCAPS_COUNT("routing.latent_count", model.routing.latent_count, "Latent capsules"),
      PCAPS_COUNT("routing.latent_dim", model.routing.latent_dim, "Latent capsule dimension"),
      PCAPS_COUNT("routing.iterations", model.routing.iterations, "Dynamic routing iterations"),
      Field{"routing.mode", "dynamic or conv-ablation",
            [](const RunConfig& c) {
              return std::string(c.model.routing.mode == RoutingMode::kDynamic ? "dynamic" : "conv-ablation");
            },
            [](RunConfig& c, const std::string& v) {
              if (v == "dynamic") {
                c.model.routing.mode = RoutingMode::kDynamic;
              } else if (v == "conv-ablation") {
                c.model.routing.mode = RoutingMode::kConvAblation;
              } else {
                throw InvalidArgument("config: bad value '" + v + "' for routing.mode");
              }
            }},
      PCAPS_COUNT("decoder.replicas", model.decoder.replicas, "Grid points per latent capsule"),
      PCAPS_COUNTS("decoder.mlp_widths", model.decoder.mlp_widths, "Decoder MLP widths, input first"),
      Field{"decoder.grid_mode", "resample (fresh grid per forward) or fixed (decoder.grid_seed)",
            [](const RunConfig& c) {
              return std::string(c.model.decoder.grid_mode == GridMode::kFixedSeed ? "fixed" : "resample");
            },
            [](RunConfig& c, const std::string& v) {
              if (v == "resample") {
                c.model.decoder.grid_mode = GridMode::kResamplePerForward;
              } else if (v == "fixed") {
                c.model.decoder.grid_mode = GridMode::kFixedSeed;
              } else {
                throw InvalidArgument("config: bad value '" + v + "' for decoder.grid_mode");
              }
            }},
      PCAPS_SEED("decoder.grid_seed", model.decoder.grid_seed, "Training grid seed when grid_mode = fixed"),
      PCAPS_REAL("model.bn_momentum", model.bn_momentum, "Batchnorm running-statistics momentum"),
      PCAPS_REAL("model.bn_epsilon", model.bn_epsilon, "Batchnorm variance epsilon"),
      PCAPS_COUNT("train.epochs", train.epochs, "Training epochs"),
      PCAPS_COUNT("train.batch_size", train.batch_size, "Shapes per batch (at least 2)"),
      PCAPS_REAL("train.learning_rate", train.adam.learning_rate, "Adam learning rate"),
      PCAPS_REAL("train.beta1", train.adam.beta1, "Adam first-moment decay"),
      PCAPS_REAL("train.beta2", train.adam.beta2, "Adam second-moment decay"),
      PCAPS_REAL("train.adam_epsilon", train.adam.epsilon, "Adam denominator epsilon"),
      PCAPS_REAL("train.lr_decay", train.lr_decay, "Per-epoch learning-rate multiplier (1 = constant)"),
      PCAPS_BOOL("train.shuffle", train.shuffle, "Shuffle shape order every epoch"),
      Field{"train.search", "float32 or float64 precision of the max-pool search",
            [](const RunConfig& c) {
              return std::string(c.train.search == SearchPrecision::kFloat32 ? "float32" : "float64");
            },
            [](RunConfig& c, const std::string& v) {
              if (v == "float32") {
                c.train.search = SearchPrecision::kFloat32;
              } else if (v == "float64") {
                c.train.search = SearchPrecision::kFloat64;
              } else {
                throw InvalidArgument("config: bad value '" + v + "' for train.search");
              }
            }},
      PCAPS_BOOL("train.squared_chamfer", train.chamfer.squared, "Squared distances in the Chamfer loss"),
      PCAPS_COUNT("train.checkpoint_every", train.checkpoint_every, "Checkpoint cadence in epochs (0 = final only)"),
      PCAPS_COUNT("train.eval_every", train.eval_every, "Evaluation cadence in epochs (0 = never)"),
      PCAPS_SEED("eval.grid_seed", eval_grid_seed, "Grid seed for eval, reconstruct, segment and latent ops"),
      PCAPS_COUNT("partnet.category_count", partnet.category_count, "Length of the category one-hot"),
      PCAPS_COUNT("partnet.part_count", partnet.part_count, "Part labels predicted per capsule"),
      PCAPS_COUNTS("partnet.hidden_widths", partnet.hidden_widths, "Hidden ReLU layers (empty = one linear layer)"),
      PCAPS_REAL("partnet.learning_rate", partnet.learning_rate, "Adam learning rate of the part classifier"),
      PCAPS_COUNT("partnet.epochs", partnet.epochs, "Full-batch part classifier epochs"),
      PCAPS_COUNT("segment.filter_k", filter_k, "Mode-filter neighbourhood size (odd; 1 disables)"),
      PCAPS_REAL("classifier.regularization", classifier.regularization, "L2 weight of the linear classifier"),
      PCAPS_REAL("classifier.learning_rate", classifier.learning_rate, "Initial subgradient step"),
      PCAPS_COUNT("classifier.iterations", classifier.iterations, "Subgradient iterations"),
      PCAPS_COUNT("interpolate.steps", interpolation_steps, "Files written by interpolate --t all"),
      Field{"data.families", "Comma-separated synthetic families",
            [](const RunConfig& c) { return join(c.data.families, family_name); },
            [](RunConfig& c, const std::string& v) {
              std::vector<ShapeFamily> families;
              for (const auto& name : split_list(v)) families.push_back(parse_family(name));
              if (families.empty()) throw InvalidArgument("config: data.families is empty");
              c.data.families = families;
            }},
      PCAPS_COUNT("data.shapes_per_family", data.shapes_per_family, "Shapes generated per family"),
      PCAPS_REAL("data.jitter", data.jitter, "Gaussian jitter sigma before normalization"),
      Field{"data.format", "xyz or ply",
            [](const RunConfig& c) { return std::string(c.data.format == CloudFormat::kXyz ? "xyz" : "ply"); },
            [](RunConfig& c, const std::string& v) { c.data.format = parse_cloud_format(v); }},
      Field{"paths.data_dir", "Dataset directory", [](const RunConfig& c) { return c.data_dir.string(); },
            [](RunConfig& c, const std::string& v) { c.data_dir = v; }},
      Field{"paths.checkpoint_dir", "Checkpoint directory",
            [](const RunConfig& c) { return c.checkpoint_dir.string(); },
            [](RunConfig& c, const std::string& v) { c.checkpoint_dir = v; }},
  };
  return table;
}

#undef PCAPS_COUNT
#undef PCAPS_SEED
#undef PCAPS_REAL
#undef PCAPS_BOOL
#undef PCAPS_COUNTS

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw InvalidArgument("config: unknown key '" + key + "'");
}

bool is_model_key(const std::string& key) {
  for (const char* prefix : {"encoder.", "routing.", "decoder.", "model."}) {
    if (key.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

}  // namespace

const std::vector<RunConfig::KeyInfo>& RunConfig::keys() {
  static const std::vector<KeyInfo> list = [] {
    std::vector<KeyInfo> out;
    for (const auto& f : fields()) out.push_back({f.key, f.description});
    return out;
  }();
  return list;
}

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, value); }

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (!seen.insert(key).second) throw InvalidArgument(where + "repeated key '" + key + "'");
    try {
      cfg.set(key, trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw InvalidArgument(where + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

void RunConfig::validate() const {
  model.validate();
  train_config().validate();
  partnet.validate();
  classifier.validate();
  if (threads < 1) throw InvalidArgument("config: run.threads must be at least 1");
  if (filter_k == 0 || filter_k % 2 == 0) throw InvalidArgument("config: segment.filter_k must be odd");
  if (interpolation_steps < 2) throw InvalidArgument("config: interpolate.steps must be at least 2");
  if (data.shapes_per_family == 0) throw InvalidArgument("config: data.shapes_per_family must be positive");
  if (!(data.jitter >= 0.0)) throw InvalidArgument("config: data.jitter must be non-negative");
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = seed;
  t.deterministic = deterministic;
  t.threads = deterministic ? 1 : threads;
  t.checkpoint_dir = checkpoint_dir;
  t.checkpoint_metadata = model_metadata();
  return t;
}

std::map<std::string, std::string> RunConfig::model_metadata() const {
  std::map<std::string, std::string> meta;
  for (const auto& f : fields()) {
    if (is_model_key(f.key)) meta[f.key] = f.get(*this);
  }
  meta["run.seed"] = std::to_string(seed);
  return meta;
}

std::map<std::string, std::string> RunConfig::partnet_metadata() const {
  auto meta = model_metadata();
  for (const auto& f : fields()) {
    if (f.key.rfind("partnet.", 0) == 0) meta[f.key] = f.get(*this);
  }
  return meta;
}

void RunConfig::apply_metadata(const std::map<std::string, std::string>& metadata) {
  for (const auto& [key, value] : metadata) {
    if (is_model_key(key) || key.rfind("partnet.", 0) == 0) set(key, value);
  }
}

}  // namespace pcaps
