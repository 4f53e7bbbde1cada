#include <string>

#include "pcaps/chamfer.hpp"
#include "pcaps/decoder.hpp"
#include "pcaps/gradcheck.hpp"
#include "pcaps/model.hpp"
#include "pcaps/ops.hpp"
#include "pcaps/random.hpp"
#include "pcaps/routing.hpp"

namespace pcaps {

namespace {

Tensor uniform_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Scalar with a distinct positive coefficient per output element.
Var project(Var y, std::uint64_t seed) {
  const std::size_t n = y.value().size();
  Rng rng(seed);
  Var w = y.tape().constant(uniform_tensor({n, 1}, rng, 0.5, 1.5));
  return ops::sum(ops::matmul(ops::reshape(y, {1, n}), w));
}

using Build = std::function<Var(Tape&, std::vector<Var>&, ParameterStore&)>;

GradCheckCase op_case(const std::string& name, std::vector<Shape> shapes, Build build, std::uint64_t seed,
                      double lo = -2.0, double hi = 2.0) {
  GradCheckCase c;
  c.name = name;
  Rng rng(seed);
  for (std::size_t i = 0; i < shapes.size(); ++i) c.store.add("in" + std::to_string(i), uniform_tensor(shapes[i], rng, lo, hi));
  const std::size_t n = shapes.size();
  c.loss = [n, build, seed](Tape& tape, ParameterStore& store) {
    std::vector<Var> in;
    for (std::size_t i = 0; i < n; ++i) in.push_back(tape.parameter(store, "in" + std::to_string(i)));
    return project(build(tape, in, store), seed + 1000);
  };
  return c;
}

Tensor random_points(std::size_t n, Rng& rng) { return uniform_tensor({n, 3}, rng, -1.0, 1.0); }

}  // namespace

std::vector<GradCheckCase> gradient_suite(std::uint64_t seed) {
  std::vector<GradCheckCase> cases;
  std::uint64_t tag = 0;
  auto next = [&] { return derive_seed(seed, {++tag}); };
  auto add = [&](const std::string& name, std::vector<Shape> shapes, Build build, double lo = -2.0, double hi = 2.0) {
    cases.push_back(op_case(name, std::move(shapes), std::move(build), next(), lo, hi));
  };

  add("matmul", {{3, 4}, {4, 2}}, [](Tape&, auto& in, auto&) { return ops::matmul(in[0], in[1]); });
  add("add", {{3, 4}, {3, 4}}, [](Tape&, auto& in, auto&) { return ops::add(in[0], in[1]); });
  add("add-bias", {{3, 4}, {4}}, [](Tape&, auto& in, auto&) { return ops::add(in[0], in[1]); });
  add("sub", {{3, 4}, {3, 4}}, [](Tape&, auto& in, auto&) { return ops::sub(in[0], in[1]); });
  add("relu", {{4, 5}}, [](Tape&, auto& in, auto&) { return ops::relu(in[0]); });
  add("tanh", {{4, 5}}, [](Tape&, auto& in, auto&) { return ops::tanh(in[0]); });
  add("softmax-rows", {{4, 3}}, [](Tape&, auto& in, auto&) { return ops::softmax(in[0], 1); });
  add("softmax-cols", {{4, 3}}, [](Tape&, auto& in, auto&) { return ops::softmax(in[0], 0); });
  add("max-rows", {{5, 3}}, [](Tape&, auto& in, auto&) { return ops::max(in[0], 1); });
  add("max-cols", {{5, 3}}, [](Tape&, auto& in, auto&) { return ops::max(in[0], 0); });
  add("mean", {{3, 3}}, [](Tape&, auto& in, auto&) { return ops::mean(ops::square(in[0])); });
  add("concat", {{2, 3}, {4, 3}}, [](Tape&, auto& in, auto&) { return ops::concat(in, 0); });
  add("scale", {{2, 3}}, [](Tape&, auto& in, auto&) { return ops::scale(in[0], -1.7); });
  add("square", {{2, 3}}, [](Tape&, auto& in, auto&) { return ops::square(in[0]); });
  add("sqrt", {{2, 3}}, [](Tape&, auto& in, auto&) { return ops::sqrt(in[0]); }, 0.2, 2.0);
  add("sum", {{3, 4}}, [](Tape&, auto& in, auto&) { return ops::sum(in[0], 0); });
  add("transpose", {{3, 4}}, [](Tape&, auto& in, auto&) { return ops::transpose(in[0]); });
  add("cross-entropy", {{4, 3}}, [](Tape&, auto& in, auto&) {
    const std::vector<std::size_t> labels{0, 2, 1, 2};
    return ops::cross_entropy(in[0], labels);
  });
  add("squash", {{4, 3}}, [](Tape&, auto& in, auto&) { return ops::squash(in[0]); });
  for (BnMode mode : {BnMode::kTrain, BnMode::kEval}) {
    const std::string suffix = mode == BnMode::kTrain ? "-train" : "-eval";
    GradCheckCase bn = op_case("batchnorm" + suffix, {{6, 3}}, [mode](Tape&, auto& in, auto& store) {
      return ops::batchnorm(in[0], store, {"bn", 0.1, 1e-5, mode});
    }, next());
    add_batchnorm_parameters(bn.store, "bn", 3);
    Rng rng(next());
    bn.store.at("bn.gamma").value = uniform_tensor({3}, rng, 0.5, 1.5);
    bn.store.at("bn.beta").value = uniform_tensor({3}, rng, -0.5, 0.5);
    bn.store.at("bn.running_mean").value = uniform_tensor({3}, rng, -0.5, 0.5);
    bn.store.at("bn.running_var").value = uniform_tensor({3}, rng, 0.5, 1.5);
    cases.push_back(std::move(bn));

    GradCheckCase pooled = op_case("pooled-layer" + suffix, {{12, 3}, {3, 5}, {5}}, [mode](Tape&, auto& in, auto& store) {
      return ops::pooled_linear_bn_relu(in[0], in[1], in[2], store, {"pool", 0.1, 1e-5, mode}, 4);
    }, next());
    add_batchnorm_parameters(pooled.store, "pool", 5);
    Rng prng(next());
    pooled.store.at("pool.gamma").value = uniform_tensor({5}, prng, -1.5, 1.5);
    pooled.store.at("pool.beta").value = uniform_tensor({5}, prng, 0.0, 1.0);
    pooled.store.at("pool.running_var").value = uniform_tensor({5}, prng, 0.5, 1.5);
    cases.push_back(std::move(pooled));
  }
  {
    GradCheckCase c;
    c.name = "routing-3-iterations";
    RoutingConfig cfg;
    cfg.latent_count = 3;
    cfg.latent_dim = 4;
    cfg.iterations = 3;
    Rng rng(next());
    add_routing_parameters(c.store, cfg, 2, rng);
    c.store.at("routing.predict.bias").value = uniform_tensor({12}, rng, -0.5, 0.5);
    c.store.add("primary", uniform_tensor({5, 2}, rng, -2.0, 2.0));
    const std::uint64_t s = next();
    c.loss = [cfg, s](Tape& tape, ParameterStore& store) {
      return project(route(tape, tape.parameter(store, "primary"), 1, cfg, store), s);
    };
    cases.push_back(std::move(c));
  }
  {
    GradCheckCase c;
    c.name = "conv-ablation";
    RoutingConfig cfg;
    cfg.latent_count = 3;
    cfg.latent_dim = 2;
    cfg.mode = RoutingMode::kConvAblation;
    Rng rng(next());
    add_routing_parameters(c.store, cfg, 2, rng);
    c.store.add("primary", uniform_tensor({10, 2}, rng, -2.0, 2.0));
    const std::uint64_t s = next();
    c.loss = [cfg, s](Tape& tape, ParameterStore& store) {
      return project(conv_ablation(tape, tape.parameter(store, "primary"), 2, cfg, store,
                                   {BnMode::kTrain, 0.1, 1e-5}),
                     s);
    };
    cases.push_back(std::move(c));
  }
  {
    GradCheckCase c;
    c.name = "chamfer";
    Rng rng(next());
    c.store.add("x", random_points(8, rng));
    c.store.add("y", random_points(7, rng));
    c.loss = [](Tape& tape, ParameterStore& store) {
      return ops::chamfer(tape.parameter(store, "x"), tape.parameter(store, "y"));
    };
    cases.push_back(std::move(c));
  }
  {
    GradCheckCase c;
    c.name = "decoder-chamfer";
    DecoderConfig cfg;
    cfg.replicas = 2;
    cfg.mlp_widths = {5, 6, 4, 3};
    Rng rng(next());
    add_decoder_parameters(c.store, cfg, rng);
    c.store.add("latent", uniform_tensor({2, 3}, rng, -0.5, 0.5));
    const PatchGrid grid = sample_grid(cfg, 2, next());
    const Tensor target = uniform_tensor({5, 3}, rng, -0.5, 0.5);
    c.loss = [cfg, grid, target](Tape& tape, ParameterStore& store) {
      Var points = decode(tape, tape.parameter(store, "latent"), 1, std::span<const PatchGrid>(&grid, 1), cfg, store,
                          {BnMode::kTrain, 0.1, 1e-5});
      return ops::chamfer(points, tape.constant(target));
    };
    cases.push_back(std::move(c));
  }
  for (RoutingMode mode : {RoutingMode::kDynamic, RoutingMode::kConvAblation}) {
    GradCheckCase c;
    c.name = mode == RoutingMode::kDynamic ? "autoencoder-miniature" : "autoencoder-miniature-ablation";
    ModelConfig cfg = ModelConfig::miniature();
    cfg.routing.mode = mode;
    init_model_parameters(c.store, cfg, next());
    std::vector<PointCloud> clouds(2);
    Rng rng(next());
    for (auto& cloud : clouds) cloud = PointCloud::from_tensor(random_points(cfg.encoder.n_points, rng));
    const std::vector<PatchGrid> grids{sample_grid(cfg.decoder, cfg.routing.latent_count, next())};
    c.loss = [cfg, clouds, grids](Tape& tape, ParameterStore& store) {
      const auto out = forward_autoencoder(tape, clouds, grids, cfg, store, BnMode::kTrain);
      return reconstruction_loss(tape, out, clouds, cfg);
    };
    cases.push_back(std::move(c));
  }
  return cases;
}

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed, const GradCheckOptions& options) {
  std::vector<GradCheckResult> results;
  for (auto& c : gradient_suite(seed)) results.push_back(check_gradients(c, options));
  return results;
}

}  // namespace pcaps
