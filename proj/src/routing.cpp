#include "pcaps/routing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kernels.hpp"
#include "pcaps/error.hpp"
#include "pcaps/ops.hpp"
#include "pcaps/parameter_store.hpp"
#include "pcaps/random.hpp"

namespace pcaps {

namespace {

constexpr const char* kPredict = "routing.predict";
constexpr const char* kAblation = "ablation";

// Rows in lexicographic order of their values.
std::vector<std::size_t> canonical_row_order(const Tensor& t, std::size_t begin, std::size_t count) {
  const std::size_t cols = t.cols();
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), begin);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double* ra = t.data() + a * cols;
    const double* rb = t.data() + b * cols;
    return std::lexicographical_compare(ra, ra + cols, rb, rb + cols);
  });
  return order;
}

Tensor per_block_glorot(std::size_t fan_in, std::size_t blocks, std::size_t width, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + width));
  Tensor w({fan_in, blocks * width});
  for (std::size_t j = 0; j < blocks; ++j)
    for (std::size_t r = 0; r < fan_in; ++r)
      for (std::size_t d = 0; d < width; ++d) w.at(r, j * width + d) = rng.uniform(-a, a);
  return w;
}

// Votes are u_i W_j + b_j with W_j the j-th column block of the prediction
// weight. Both routing reductions factor through the K-dimensional inputs,
// so the (S_c x L x D) vote tensor is never formed.

struct BlockView {
  const double* w;  // K x (L * D)
  const double* b;  // L * D
  std::size_t k, caps, dim;
  double at(std::size_t kk, std::size_t j, std::size_t d) const { return w[kk * caps * dim + j * dim + d]; }
};

// s[j, :] = sum_i c[i, j] (u_i W_j + b_j) = P_j W_j + (sum_i c[i, j]) b_j with
// P = c^T u.
Var vote_sum(Var couplings, Var inputs, Var weight, Var bias, std::size_t latent_dim) {
  const Tensor& c = couplings.value();
  const Tensor& u = inputs.value();
  const std::size_t rows = c.rows(), caps = c.cols(), dim = latent_dim, k = u.cols();
  const BlockView wv{weight.value().data(), bias.value().data(), k, caps, dim};
  Tensor pj({caps, k});
  std::vector<double> csum(caps, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < caps; ++j) {
      const double cij = c.at(i, j);
      csum[j] += cij;
      for (std::size_t kk = 0; kk < k; ++kk) pj.at(j, kk) += cij * u.at(i, kk);
    }
  Tensor s({caps, dim});
  for (std::size_t j = 0; j < caps; ++j)
    for (std::size_t d = 0; d < dim; ++d) {
      double acc = csum[j] * wv.b[j * dim + d];
      for (std::size_t kk = 0; kk < k; ++kk) acc += pj.at(j, kk) * wv.at(kk, j, d);
      s.at(j, d) = acc;
    }
  return couplings.tape().record(
      "vote_sum", std::move(s), {couplings, inputs, weight, bias},
      [=, pj = std::move(pj), csum = std::move(csum)](Tape& t, const Tensor&, const Tensor& g) {
        const Tensor& c = t.value(couplings);
        const Tensor& u = t.value(inputs);
        const BlockView wv{t.value(weight).data(), t.value(bias).data(), k, caps, dim};
        if (t.requires_grad(weight)) {
          double* dw = t.grad(weight).data();
          for (std::size_t kk = 0; kk < k; ++kk)
            for (std::size_t j = 0; j < caps; ++j)
              for (std::size_t d = 0; d < dim; ++d) dw[kk * caps * dim + j * dim + d] += pj.at(j, kk) * g.at(j, d);
        }
        if (t.requires_grad(bias)) {
          double* db = t.grad(bias).data();
          for (std::size_t j = 0; j < caps; ++j)
            for (std::size_t d = 0; d < dim; ++d) db[j * dim + d] += csum[j] * g.at(j, d);
        }
        Tensor dp({caps, k});
        std::vector<double> dcsum(caps, 0.0);
        for (std::size_t j = 0; j < caps; ++j)
          for (std::size_t d = 0; d < dim; ++d) {
            const double gjd = g.at(j, d);
            dcsum[j] += gjd * wv.b[j * dim + d];
            for (std::size_t kk = 0; kk < k; ++kk) dp.at(j, kk) += gjd * wv.at(kk, j, d);
          }
        if (t.requires_grad(couplings)) {
          Tensor& dc = t.grad(couplings);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < caps; ++j) {
              double acc = dcsum[j];
              for (std::size_t kk = 0; kk < k; ++kk) acc += u.at(i, kk) * dp.at(j, kk);
              dc.at(i, j) += acc;
            }
        }
        if (t.requires_grad(inputs)) {
          Tensor& du = t.grad(inputs);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < caps; ++j) {
              const double cij = c.at(i, j);
              for (std::size_t kk = 0; kk < k; ++kk) du.at(i, kk) += cij * dp.at(j, kk);
            }
        }
      });
}

// a[i, j] = (u_i W_j + b_j) . v_j = u_i . q_j + b_j . v_j with q_j = W_j v_j.
Var agreement(Var inputs, Var weight, Var bias, Var outputs) {
  const Tensor& u = inputs.value();
  const Tensor& v = outputs.value();
  const std::size_t rows = u.rows(), k = u.cols(), caps = v.rows(), dim = v.cols();
  const BlockView wv{weight.value().data(), bias.value().data(), k, caps, dim};
  Tensor q({k, caps});
  std::vector<double> offset(caps, 0.0);
  for (std::size_t j = 0; j < caps; ++j)
    for (std::size_t d = 0; d < dim; ++d) {
      const double vjd = v.at(j, d);
      offset[j] += wv.b[j * dim + d] * vjd;
      for (std::size_t kk = 0; kk < k; ++kk) q.at(kk, j) += wv.at(kk, j, d) * vjd;
    }
  Tensor a({rows, caps});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < caps; ++j) {
      double acc = offset[j];
      for (std::size_t kk = 0; kk < k; ++kk) acc += u.at(i, kk) * q.at(kk, j);
      a.at(i, j) = acc;
    }
  return inputs.tape().record(
      "agreement", std::move(a), {inputs, weight, bias, outputs},
      [=, q = std::move(q)](Tape& t, const Tensor&, const Tensor& g) {
        const Tensor& u = t.value(inputs);
        const Tensor& v = t.value(outputs);
        const BlockView wv{t.value(weight).data(), t.value(bias).data(), k, caps, dim};
        Tensor dq({k, caps});
        std::vector<double> doffset(caps, 0.0);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < caps; ++j) {
            const double gij = g.at(i, j);
            doffset[j] += gij;
            for (std::size_t kk = 0; kk < k; ++kk) dq.at(kk, j) += u.at(i, kk) * gij;
          }
        if (t.requires_grad(inputs)) {
          Tensor& du = t.grad(inputs);
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < caps; ++j) {
              const double gij = g.at(i, j);
              for (std::size_t kk = 0; kk < k; ++kk) du.at(i, kk) += gij * q.at(kk, j);
            }
        }
        if (t.requires_grad(weight)) {
          double* dw = t.grad(weight).data();
          for (std::size_t kk = 0; kk < k; ++kk)
            for (std::size_t j = 0; j < caps; ++j)
              for (std::size_t d = 0; d < dim; ++d) dw[kk * caps * dim + j * dim + d] += dq.at(kk, j) * v.at(j, d);
        }
        if (t.requires_grad(bias)) {
          double* db = t.grad(bias).data();
          for (std::size_t j = 0; j < caps; ++j)
            for (std::size_t d = 0; d < dim; ++d) db[j * dim + d] += doffset[j] * v.at(j, d);
        }
        if (t.requires_grad(outputs)) {
          Tensor& dv = t.grad(outputs);
          for (std::size_t j = 0; j < caps; ++j)
            for (std::size_t d = 0; d < dim; ++d) {
              double acc = doffset[j] * wv.b[j * dim + d];
              for (std::size_t kk = 0; kk < k; ++kk) acc += dq.at(kk, j) * wv.at(kk, j, d);
              dv.at(j, d) += acc;
            }
        }
      });
}

double row_norm_sq(const double* r, std::size_t n) {
  double acc = 0.0;
  for (std::size_t d = 0; d < n; ++d) acc += r[d] * r[d];
  return acc;
}

void require_finite(const Tensor& t, std::size_t iteration, const char* what) {
  if (!t.all_finite()) {
    throw NonFiniteError("route: non-finite " + std::string(what) + " at iteration " +
                         std::to_string(iteration));
  }
}

}  // namespace

void RoutingConfig::validate() const {
  if (latent_count == 0 || latent_dim == 0) throw InvalidArgument("routing: latent sizes must be positive");
  if (mode == RoutingMode::kDynamic && iterations == 0) {
    throw InvalidArgument("routing: iterations must be at least 1");
  }
}

Tensor squash(const Tensor& rows) {
  if (rows.rank() != 2) throw ShapeError("squash: expected a 2-D tensor, got " + shape_string(rows.shape()));
  Tensor out(rows.shape());
  const std::size_t n = rows.cols();
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    const double* s = rows.data() + r * n;
    const double sq = row_norm_sq(s, n);
    if (sq == 0.0) continue;
    const double f = std::sqrt(sq) / (1.0 + sq);
    for (std::size_t d = 0; d < n; ++d) out.data()[r * n + d] = f * s[d];
  }
  return out;
}

namespace ops {
Var squash(Var rows) {
  Tensor out = pcaps::squash(rows.value());
  return rows.tape().record("squash", std::move(out), {rows}, [rows](Tape& t, const Tensor&, const Tensor& g) {
    const Tensor& s = t.value(rows);
    Tensor& ds = t.grad(rows);
    const std::size_t n = s.cols();
    for (std::size_t r = 0; r < s.rows(); ++r) {
      const double* sr = s.data() + r * n;
      const double* gr = g.data() + r * n;
      const double sq = row_norm_sq(sr, n);
      if (sq == 0.0) continue;
      // v = f(|s|) s with f(x) = x / (1 + x^2).
      const double norm = std::sqrt(sq);
      const double f = norm / (1.0 + sq);
      const double fprime = (1.0 - sq) / ((1.0 + sq) * (1.0 + sq));
      double sg = 0.0;
      for (std::size_t d = 0; d < n; ++d) sg += sr[d] * gr[d];
      const double radial = fprime / norm * sg;
      double* dr = ds.data() + r * n;
      for (std::size_t d = 0; d < n; ++d) dr[d] += f * gr[d] + radial * sr[d];
    }
  });
}
}  // namespace ops

void add_routing_parameters(ParameterStore& store, const RoutingConfig& cfg, std::size_t primary_dim, Rng& rng) {
  cfg.validate();
  const std::size_t width = cfg.latent_count * cfg.latent_dim;
  if (cfg.mode == RoutingMode::kDynamic) {
    store.add(std::string(kPredict) + ".weight", per_block_glorot(primary_dim, cfg.latent_count, cfg.latent_dim, rng));
    store.add(std::string(kPredict) + ".bias", Tensor({width}));
  } else {
    store.add(std::string(kAblation) + ".weight", per_block_glorot(primary_dim, cfg.latent_count, cfg.latent_dim, rng));
    store.add(std::string(kAblation) + ".bias", Tensor({width}));
    add_batchnorm_parameters(store, std::string(kAblation) + ".bn", width);
  }
}

Var route(Tape& tape, Var primary, std::size_t batch, const RoutingConfig& cfg, ParameterStore& store,
          std::vector<RoutingState>* trace) {
  cfg.validate();
  if (cfg.mode != RoutingMode::kDynamic) throw InvalidArgument("route: config is not in dynamic mode");
  const Tensor& p = primary.value();
  if (p.rank() != 2 || batch == 0 || p.rows() % batch != 0) {
    throw ShapeError("route: primary capsules " + shape_string(p.shape()) + " do not split into " +
                     std::to_string(batch) + " shapes");
  }
  const std::size_t per_shape = p.rows() / batch;
  const std::size_t caps = cfg.latent_count, dim = cfg.latent_dim;
  Var weight = tape.parameter(store, std::string(kPredict) + ".weight");
  Var bias = tape.parameter(store, std::string(kPredict) + ".bias");
  if (weight.value().rows() != p.cols() || weight.value().cols() != caps * dim) {
    throw ShapeError("route: prediction weight " + shape_string(weight.shape()) + " does not map " +
                     std::to_string(p.cols()) + "-D capsules to " + std::to_string(caps) + "x" +
                     std::to_string(dim));
  }
  if (trace) trace->clear();

  std::vector<Var> outputs;
  outputs.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto order = canonical_row_order(p, b * per_shape, per_shape);
    Var u = ops::gather_rows(primary, order);
    RoutingState state;
    if (trace) {
      state.predictions = Tensor({per_shape, caps * dim});
      kernels::gemm_nn_acc(u.value().data(), weight.value().data(), state.predictions.data(), per_shape,
                           p.cols(), caps * dim);
      for (std::size_t i = 0; i < per_shape; ++i)
        for (std::size_t c = 0; c < caps * dim; ++c) state.predictions.at(i, c) += bias.value()[c];
    }

    Var logits = tape.constant(Tensor({per_shape, caps}));
    Var v;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      Var c = ops::softmax(logits, 1);
      Var s = vote_sum(c, u, weight, bias, dim);
      require_finite(s.value(), it, "capsule inputs");
      v = ops::squash(s);
      require_finite(v.value(), it, "capsule outputs");
      if (trace) {
        state.logits.push_back(logits.value());
        state.couplings.push_back(c.value());
      }
      if (it + 1 < cfg.iterations) {
        logits = ops::add(logits, agreement(u, weight, bias, v));
        require_finite(logits.value(), it, "logits");
      }
    }
    if (trace) {
      state.outputs = v.value();
      trace->push_back(std::move(state));
    }
    outputs.push_back(v);
  }
  return batch == 1 ? outputs[0] : ops::concat(outputs, 0);
}

Var conv_ablation(Tape& tape, Var primary, std::size_t batch, const RoutingConfig& cfg, ParameterStore& store,
                  const ForwardOptions& fwd) {
  cfg.validate();
  const Tensor& p = primary.value();
  if (p.rank() != 2 || batch == 0 || p.rows() % batch != 0) {
    throw ShapeError("conv_ablation: primary capsules " + shape_string(p.shape()) + " do not split into " +
                     std::to_string(batch) + " shapes");
  }
  const std::size_t per_shape = p.rows() / batch;
  std::vector<std::size_t> order;
  order.reserve(p.rows());
  for (std::size_t b = 0; b < batch; ++b) {
    const auto part = canonical_row_order(p, b * per_shape, per_shape);
    order.insert(order.end(), part.begin(), part.end());
  }
  Var sorted = ops::gather_rows(primary, order);
  const std::string name = kAblation;
  Var pooled = ops::pooled_linear_bn_relu(sorted, tape.parameter(store, name + ".weight"),
                                          tape.parameter(store, name + ".bias"), store,
                                          {name + ".bn", fwd.bn_momentum, fwd.bn_epsilon, fwd.bn_mode}, per_shape);
  // Channel j * D + d is dimension d of capsule j.
  return ops::reshape(pooled, {batch * cfg.latent_count, cfg.latent_dim});
}

Var route_capsules(Tape& tape, Var primary, std::size_t batch, const RoutingConfig& cfg, ParameterStore& store,
                   const ForwardOptions& fwd) {
  return cfg.mode == RoutingMode::kDynamic ? route(tape, primary, batch, cfg, store)
                                           : conv_ablation(tape, primary, batch, cfg, store, fwd);
}

LatentCapsules route(const PrimaryCapsules& primary, const RoutingConfig& cfg, ParameterStore& store,
                     RoutingState* trace, const TapeOptions& tape_options) {
  Tape tape(tape_options);
  std::vector<RoutingState> states;
  Var out = route(tape, tape.constant(primary.capsules), 1, cfg, store, trace ? &states : nullptr);
  if (trace) *trace = std::move(states.front());
  return {out.value()};
}

}  // namespace pcaps
