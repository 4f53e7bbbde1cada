#include "pcaps/ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "kernels.hpp"
#include "pcaps/error.hpp"
#include "pcaps/parameter_store.hpp"

namespace pcaps {

void add_batchnorm_parameters(ParameterStore& store, const std::string& name, std::size_t channels) {
  store.add(name + ".gamma", Tensor({channels}, 1.0));
  store.add(name + ".beta", Tensor({channels}, 0.0));
  store.add(name + ".running_mean", Tensor({channels}, 0.0), false);
  store.add(name + ".running_var", Tensor({channels}, 1.0), false);
}

namespace ops {
namespace {

[[noreturn]] void shape_fail(std::string_view op, const std::string& what) {
  throw ShapeError(std::string(op) + ": " + what);
}

void require_2d(std::string_view op, const Tensor& t) {
  if (t.rank() != 2) shape_fail(op, "expected a 2-D tensor, got " + shape_string(t.shape()));
}

void accumulate(Tensor& dst, const Tensor& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <class F>
Var unary(std::string_view op, Var a, F&& f, Tape::Backward backward) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.tape().record(op, std::move(y), {a}, std::move(backward));
}

// Iterates the reduction groups of a 2-D tensor along `axis`: group g has
// `count` elements at offset(g) + k * stride.
struct AxisWalk {
  std::size_t groups, count, stride, rows, cols, axis;
  AxisWalk(const Tensor& t, std::size_t ax) : rows(t.rows()), cols(t.cols()), axis(ax) {
    groups = axis == 1 ? rows : cols;
    count = axis == 1 ? cols : rows;
    stride = axis == 1 ? 1 : cols;
  }
  std::size_t offset(std::size_t g) const { return axis == 1 ? g * cols : g; }
};

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& w = b.value();
  require_2d("matmul", x);
  require_2d("matmul", w);
  if (x.cols() != w.rows()) {
    shape_fail("matmul", "inner dimensions differ: " + shape_string(x.shape()) + " * " +
                             shape_string(w.shape()));
  }
  const std::size_t n = x.rows(), k = x.cols(), m = w.cols();
  Tensor y({n, m});
  kernels::gemm_nn_acc(x.data(), w.data(), y.data(), n, k, m);
  return a.tape().record("matmul", std::move(y), {a, b},
                         [a, b, n, k, m](Tape& t, const Tensor&, const Tensor& g) {
                           const Tensor& x = t.value(a);
                           const Tensor& w = t.value(b);
                           if (t.requires_grad(a)) {
                             Tensor wt({m, k});
                             kernels::transpose(w.data(), wt.data(), k, m);
                             kernels::gemm_nn_acc(g.data(), wt.data(), t.grad(a).data(), n, m, k);
                           }
                           if (t.requires_grad(b)) {
                             kernels::gemm_tn_acc(x.data(), g.data(), t.grad(b).data(), n, k, m);
                           }
                         });
}

Var add(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (same_shape(x, y)) {
    Tensor out = x;
    accumulate(out, y);
    return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
      if (t.requires_grad(a)) accumulate(t.grad(a), g);
      if (t.requires_grad(b)) accumulate(t.grad(b), g);
    });
  }
  if (x.rank() == 2 && y.rank() == 1 && y.size() == x.cols()) {
    const std::size_t rows = x.rows(), cols = x.cols();
    Tensor out = x;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += y[c];
    return a.tape().record("add", std::move(out), {a, b},
                           [a, b, rows, cols](Tape& t, const Tensor&, const Tensor& g) {
                             if (t.requires_grad(a)) accumulate(t.grad(a), g);
                             if (t.requires_grad(b)) {
                               Tensor& gb = t.grad(b);
                               for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
                             }
                           });
  }
  shape_fail("add", "incompatible shapes " + shape_string(x.shape()) + " and " +
                        shape_string(y.shape()));
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var scale(Var a, double factor) {
  return unary("scale", a, [factor](double v) { return factor * v; },
               [a, factor](Tape& t, const Tensor&, const Tensor& g) {
                 Tensor& ga = t.grad(a);
                 for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
               });
}

Var relu(Var a) {
  Tape& tape = a.tape();
  if (tape.options().track_branches) {
    const Tensor& x = a.value();
    std::vector<std::uint8_t> mask(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) mask[i] = x[i] > 0.0;
    tape.note_branches(mask);
  }
  return unary("relu", a, [](double v) { return v > 0.0 ? v : 0.0; },
               [a](Tape& t, const Tensor&, const Tensor& g) {
                 const Tensor& x = t.value(a);
                 Tensor& ga = t.grad(a);
                 for (std::size_t i = 0; i < g.size(); ++i)
                   if (x[i] > 0.0) ga[i] += g[i];
               });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double v) { return std::tanh(v); },
               [a](Tape& t, const Tensor& y, const Tensor& g) {
                 Tensor& ga = t.grad(a);
                 for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
               });
}

Var square(Var a) {
  return unary("square", a, [](double v) { return v * v; },
               [a](Tape& t, const Tensor&, const Tensor& g) {
                 const Tensor& x = t.value(a);
                 Tensor& ga = t.grad(a);
                 for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * x[i] * g[i];
               });
}

Var sqrt(Var a) {
  for (double v : a.value().values())
    if (v < 0.0) throw InvalidArgument("sqrt: negative input " + std::to_string(v));
  return unary("sqrt", a, [](double v) { return std::sqrt(v); },
               [a](Tape& t, const Tensor& y, const Tensor& g) {
                 Tensor& ga = t.grad(a);
                 for (std::size_t i = 0; i < g.size(); ++i)
                   if (y[i] > 0.0) ga[i] += g[i] * 0.5 / y[i];
               });
}

Var softmax(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  require_2d("softmax", x);
  if (axis > 1) shape_fail("softmax", "axis must be 0 or 1");
  const AxisWalk walk(x, axis);
  Tensor y(x.shape());
  for (std::size_t gi = 0; gi < walk.groups; ++gi) {
    const std::size_t o = walk.offset(gi);
    double mx = x[o];
    for (std::size_t k = 1; k < walk.count; ++k) mx = std::max(mx, x[o + k * walk.stride]);
    double z = 0.0;
    for (std::size_t k = 0; k < walk.count; ++k) {
      const double e = std::exp(x[o + k * walk.stride] - mx);
      y[o + k * walk.stride] = e;
      z += e;
    }
    for (std::size_t k = 0; k < walk.count; ++k) y[o + k * walk.stride] /= z;
  }
  return a.tape().record("softmax", std::move(y), {a}, [a, walk](Tape& t, const Tensor& y, const Tensor& g) {
    Tensor& ga = t.grad(a);
    for (std::size_t gi = 0; gi < walk.groups; ++gi) {
      const std::size_t o = walk.offset(gi);
      double dot = 0.0;
      for (std::size_t k = 0; k < walk.count; ++k) {
        const std::size_t i = o + k * walk.stride;
        dot += g[i] * y[i];
      }
      for (std::size_t k = 0; k < walk.count; ++k) {
        const std::size_t i = o + k * walk.stride;
        ga[i] += y[i] * (g[i] - dot);
      }
    }
  });
}

Var max(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  require_2d("max", x);
  if (axis > 1) shape_fail("max", "axis must be 0 or 1");
  const AxisWalk walk(x, axis);
  Tensor y({walk.groups});
  std::vector<std::size_t> arg(walk.groups);
  for (std::size_t gi = 0; gi < walk.groups; ++gi) {
    const std::size_t o = walk.offset(gi);
    std::size_t best = 0;
    for (std::size_t k = 1; k < walk.count; ++k)
      if (x[o + k * walk.stride] > x[o + best * walk.stride]) best = k;
    arg[gi] = o + best * walk.stride;
    y[gi] = x[arg[gi]];
    a.tape().note_branch(best);
  }
  return a.tape().record("max", std::move(y), {a}, [a, arg](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad(a);
    for (std::size_t gi = 0; gi < arg.size(); ++gi) ga[arg[gi]] += g[gi];
  });
}

Var sum(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  require_2d("sum", x);
  if (axis > 1) shape_fail("sum", "axis must be 0 or 1");
  const AxisWalk walk(x, axis);
  Tensor y({walk.groups});
  for (std::size_t gi = 0; gi < walk.groups; ++gi) {
    double s = 0.0;
    for (std::size_t k = 0; k < walk.count; ++k) s += x[walk.offset(gi) + k * walk.stride];
    y[gi] = s;
  }
  return a.tape().record("sum", std::move(y), {a}, [a, walk](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad(a);
    for (std::size_t gi = 0; gi < walk.groups; ++gi)
      for (std::size_t k = 0; k < walk.count; ++k) ga[walk.offset(gi) + k * walk.stride] += g[gi];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a}, [a](Tape& t, const Tensor&, const Tensor& g) {
    for (auto& v : t.grad(a).values()) v += g[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  if (axis > 1) shape_fail("concat", "axis must be 0 or 1");
  Tape& tape = parts[0].tape();
  std::size_t rows = 0, cols = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    require_2d("concat", v);
    if (axis == 0) {
      if (cols != 0 && v.cols() != cols)
        shape_fail("concat", "column mismatch " + shape_string(v.shape()));
      cols = v.cols();
      rows += v.rows();
    } else {
      if (rows != 0 && v.rows() != rows)
        shape_fail("concat", "row mismatch " + shape_string(v.shape()));
      rows = v.rows();
      cols += v.cols();
    }
  }
  Tensor y({rows, cols});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == 0) y.at(offset + r, c) = v.at(r, c);
        else y.at(r, offset + c) = v.at(r, c);
      }
    offset += axis == 0 ? v.rows() : v.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record("concat", std::move(y), parts,
                     [inputs, axis](Tape& t, const Tensor&, const Tensor& g) {
                       std::size_t off = 0;
                       const std::size_t gcols = g.cols();
                       for (const Var& p : inputs) {
                         const Tensor& v = t.value(p);
                         if (t.requires_grad(p)) {
                           Tensor& gp = t.grad(p);
                           for (std::size_t r = 0; r < v.rows(); ++r)
                             for (std::size_t c = 0; c < v.cols(); ++c)
                               gp.at(r, c) += axis == 0 ? g[(off + r) * gcols + c]
                                                        : g[r * gcols + off + c];
                         }
                         off += axis == 0 ? v.rows() : v.cols();
                       }
                     });
}

Var reshape(Var a, Shape shape) {
  const Tensor& x = a.value();
  if (shape_size(shape) != x.size()) {
    shape_fail("reshape", "cannot reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  return a.tape().record("reshape", x.reshaped(std::move(shape)), {a},
                         [a](Tape& t, const Tensor&, const Tensor& g) {
                           auto ga = t.grad(a).values();
                           for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                         });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  require_2d("transpose", x);
  const std::size_t n = x.rows(), m = x.cols();
  Tensor y({m, n});
  kernels::transpose(x.data(), y.data(), n, m);
  return a.tape().record("transpose", std::move(y), {a}, [a, n, m](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad(a);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += g[j * n + i];
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& x = a.value();
  require_2d("gather_rows", x);
  if (rows.empty()) shape_fail("gather_rows", "empty row list");
  const std::size_t cols = x.cols();
  Tensor y({rows.size(), cols});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= x.rows()) {
      shape_fail("gather_rows", "row " + std::to_string(rows[r]) + " out of range for " +
                                    shape_string(x.shape()));
    }
    std::copy_n(x.data() + rows[r] * cols, cols, y.data() + r * cols);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.tape().record("gather_rows", std::move(y), {a},
                         [a, idx = std::move(idx), cols](Tape& t, const Tensor&, const Tensor& g) {
                           Tensor& ga = t.grad(a);
                           for (std::size_t r = 0; r < idx.size(); ++r)
                             for (std::size_t c = 0; c < cols; ++c) ga[idx[r] * cols + c] += g[r * cols + c];
                         });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& x = a.value();
  require_2d("slice_rows", x);
  if (count == 0 || begin + count > x.rows()) {
    shape_fail("slice_rows", "rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                                 ") out of range for " + shape_string(x.shape()));
  }
  const std::size_t cols = x.cols();
  return a.tape().record("slice_rows", x.slice_rows(begin, count), {a},
                         [a, begin, cols](Tape& t, const Tensor&, const Tensor& g) {
                           auto ga = t.grad(a).values();
                           for (std::size_t i = 0; i < g.size(); ++i) ga[begin * cols + i] += g[i];
                         });
}

Var batchnorm(Var x, ParameterStore& store, const BatchNormState& state) {
  const Tensor& in = x.value();
  require_2d("batchnorm", in);
  const std::size_t rows = in.rows(), ch = in.cols();
  Tape& tape = x.tape();
  Var gamma = tape.parameter(store, state.name + ".gamma");
  Var beta = tape.parameter(store, state.name + ".beta");
  if (gamma.value().size() != ch) {
    shape_fail("batchnorm", "'" + state.name + "' has " + std::to_string(gamma.value().size()) +
                                " channels, input is " + shape_string(in.shape()));
  }
  const bool train = state.mode == BnMode::kTrain;
  if (train && rows < 2) {
    throw InvalidArgument("batchnorm '" + state.name + "': train mode needs at least 2 rows, got " +
                          std::to_string(rows));
  }
  std::vector<double> mu(ch, 0.0), var(ch, 0.0), inv_s(ch);
  if (train) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) mu[c] += in[r * ch + c];
    for (auto& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < ch; ++c) {
        const double d = in[r * ch + c] - mu[c];
        var[c] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(rows);
    if (tape.options().update_running_stats) {
      Tensor& rm = store.at(state.name + ".running_mean").value;
      Tensor& rv = store.at(state.name + ".running_var").value;
      for (std::size_t c = 0; c < ch; ++c) {
        rm[c] = store.store((1.0 - state.momentum) * rm[c] + state.momentum * mu[c]);
        rv[c] = store.store((1.0 - state.momentum) * rv[c] + state.momentum * var[c]);
      }
    }
  } else {
    const Tensor& rm = store.at(state.name + ".running_mean").value;
    const Tensor& rv = store.at(state.name + ".running_var").value;
    for (std::size_t c = 0; c < ch; ++c) {
      mu[c] = rm[c];
      var[c] = rv[c];
    }
  }
  for (std::size_t c = 0; c < ch; ++c) inv_s[c] = 1.0 / std::sqrt(var[c] + state.epsilon);
  Tensor xhat(in.shape());
  Tensor y(in.shape());
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t i = r * ch + c;
      xhat[i] = (in[i] - mu[c]) * inv_s[c];
      y[i] = gv[c] * xhat[i] + bv[c];
    }
  return tape.record("batchnorm", std::move(y), {x, gamma, beta},
                     [x, gamma, beta, train, rows, ch, inv_s, xhat = std::move(xhat)](
                         Tape& t, const Tensor&, const Tensor& g) {
                       const Tensor& gv = t.value(gamma);
                       std::vector<double> sum_g(ch, 0.0), sum_gx(ch, 0.0);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t c = 0; c < ch; ++c) {
                           sum_g[c] += g[r * ch + c];
                           sum_gx[c] += g[r * ch + c] * xhat[r * ch + c];
                         }
                       if (t.requires_grad(gamma)) {
                         Tensor& gg = t.grad(gamma);
                         for (std::size_t c = 0; c < ch; ++c) gg[c] += sum_gx[c];
                       }
                       if (t.requires_grad(beta)) {
                         Tensor& gb = t.grad(beta);
                         for (std::size_t c = 0; c < ch; ++c) gb[c] += sum_g[c];
                       }
                       if (!t.requires_grad(x)) return;
                       Tensor& gx = t.grad(x);
                       const double n = static_cast<double>(rows);
                       for (std::size_t r = 0; r < rows; ++r)
                         for (std::size_t c = 0; c < ch; ++c) {
                           const std::size_t i = r * ch + c;
                           const double k = gv[c] * inv_s[c];
                           gx[i] += train ? k * (g[i] - sum_g[c] / n - xhat[i] * sum_gx[c] / n)
                                          : k * g[i];
                         }
                     });
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  require_2d("cross_entropy", z);
  const std::size_t rows = z.rows(), cols = z.cols();
  if (labels.size() != rows) {
    shape_fail("cross_entropy", std::to_string(labels.size()) + " labels for " +
                                    shape_string(z.shape()) + " logits");
  }
  Tensor prob(z.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= cols) throw InvalidArgument("cross_entropy: label " + std::to_string(labels[r]) + " out of range");
    double mx = z[r * cols];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, z[r * cols + c]);
    double zsum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      prob[r * cols + c] = std::exp(z[r * cols + c] - mx);
      zsum += prob[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) prob[r * cols + c] /= zsum;
    loss -= z[r * cols + labels[r]] - mx - std::log(zsum);
  }
  loss /= static_cast<double>(rows);
  std::vector<std::size_t> y(labels.begin(), labels.end());
  return logits.tape().record("cross_entropy", Tensor::scalar(loss), {logits},
                              [logits, prob = std::move(prob), y = std::move(y), rows, cols](
                                  Tape& t, const Tensor&, const Tensor& g) {
                                Tensor& gz = t.grad(logits);
                                const double k = g[0] / static_cast<double>(rows);
                                for (std::size_t r = 0; r < rows; ++r)
                                  for (std::size_t c = 0; c < cols; ++c)
                                    gz[r * cols + c] += k * (prob[r * cols + c] - (c == y[r] ? 1.0 : 0.0));
                              });
}

}  // namespace ops
}  // namespace pcaps
