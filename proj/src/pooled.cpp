#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "parallel.hpp"
#include "pcaps/error.hpp"
#include "pcaps/ops.hpp"
#include "pcaps/parameter_store.hpp"

namespace pcaps::ops {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

constexpr std::size_t kChannelBlock = 512;

// For every (segment, channel) finds the row maximizing sign[c] * (h_r . w_c),
// lowest row on ties.
template <class Scalar>
std::vector<std::size_t> search_rows(const Tensor& h, const Tensor& w, const std::vector<double>& sign,
                                     std::size_t segment_rows, int threads) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const std::size_t rows = h.rows(), feat = h.cols(), ch = w.cols();
  const std::size_t segments = rows / segment_rows;
  const Mat hs = ConstMap(h.data(), rows, feat).template cast<Scalar>();
  // Negation is exact, so scanning for the maximum of the signed product
  // selects the same row as comparing sign * z.
  Mat ws = ConstMap(w.data(), feat, ch).template cast<Scalar>();
  for (std::size_t c = 0; c < ch; ++c)
    if (sign[c] < 0.0) ws.col(c) = -ws.col(c);
  std::vector<std::size_t> best(segments * ch, 0);
  const std::size_t blocks = (ch + kChannelBlock - 1) / kChannelBlock;
  detail::parallel_for(blocks * segments, threads, [&](std::size_t job) {
    const std::size_t seg = job / blocks;
    const std::size_t c0 = (job % blocks) * kChannelBlock;
    const std::size_t width = std::min(kChannelBlock, ch - c0);
    const Mat z = hs.middleRows(seg * segment_rows, segment_rows) * ws.middleCols(c0, width);
    std::vector<Scalar> top(z.data(), z.data() + width);
    std::vector<std::uint32_t> arg(width, 0);
    for (std::size_t r = 1; r < segment_rows; ++r) {
      const Scalar* zr = z.data() + r * width;
      for (std::size_t j = 0; j < width; ++j) {
        if (zr[j] > top[j]) {
          top[j] = zr[j];
          arg[j] = static_cast<std::uint32_t>(r);
        }
      }
    }
    for (std::size_t j = 0; j < width; ++j) best[seg * ch + c0 + j] = seg * segment_rows + arg[j];
  });
  return best;
}

}  // namespace

Var pooled_linear_bn_relu(Var h, Var weight, Var bias, ParameterStore& store, const BatchNormState& bn,
                          std::size_t segment_rows) {
  Tape& tape = h.tape();
  const Tensor& hv = h.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  if (hv.rank() != 2 || wv.rank() != 2 || hv.cols() != wv.rows() || bv.size() != wv.cols()) {
    throw ShapeError("pooled_linear_bn_relu: incompatible shapes " + shape_string(hv.shape()) +
                     ", " + shape_string(wv.shape()) + ", " + shape_string(bv.shape()));
  }
  const std::size_t rows = hv.rows(), feat = hv.cols(), ch = wv.cols();
  if (segment_rows == 0 || rows % segment_rows != 0) {
    throw ShapeError("pooled_linear_bn_relu: " + std::to_string(rows) +
                     " rows do not split into segments of " + std::to_string(segment_rows));
  }
  const std::size_t segments = rows / segment_rows;
  const bool train = bn.mode == BnMode::kTrain;
  if (train && rows < 2) {
    throw InvalidArgument("batchnorm '" + bn.name + "': train mode needs at least 2 rows");
  }
  Var gamma = tape.parameter(store, bn.name + ".gamma");
  Var beta = tape.parameter(store, bn.name + ".beta");
  if (gamma.value().size() != ch) {
    throw ShapeError("pooled_linear_bn_relu: batchnorm '" + bn.name + "' channel mismatch");
  }
  const Tensor& gv = gamma.value();
  const Tensor& betav = beta.value();

  std::vector<double> hbar(feat, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t f = 0; f < feat; ++f) hbar[f] += hv[r * feat + f];
  for (auto& x : hbar) x /= static_cast<double>(rows);

  const ConstMap W(wv.data(), feat, ch);
  std::vector<double> mu(ch), var(ch), inv_s(ch);
  RowMatrix cw;  // covariance times weight, kept for the backward pass
  if (train) {
    RowMatrix hc = ConstMap(hv.data(), rows, feat);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t f = 0; f < feat; ++f) hc(r, f) -= hbar[f];
    const RowMatrix cov = (hc.transpose() * hc) / static_cast<double>(rows);
    cw = cov * W;
    for (std::size_t c = 0; c < ch; ++c) mu[c] = bv[c];
    for (std::size_t f = 0; f < feat; ++f) {
      const double* wf = wv.data() + f * ch;
      const double* cwf = cw.data() + f * ch;
      for (std::size_t c = 0; c < ch; ++c) {
        mu[c] += hbar[f] * wf[c];
        var[c] += wf[c] * cwf[c];
      }
    }
    for (auto& v : var) v = std::max(v, 0.0);
    if (tape.options().update_running_stats) {
      Tensor& rm = store.at(bn.name + ".running_mean").value;
      Tensor& rv = store.at(bn.name + ".running_var").value;
      for (std::size_t c = 0; c < ch; ++c) {
        rm[c] = store.store((1.0 - bn.momentum) * rm[c] + bn.momentum * mu[c]);
        rv[c] = store.store((1.0 - bn.momentum) * rv[c] + bn.momentum * var[c]);
      }
    }
  } else {
    const Tensor& rm = store.at(bn.name + ".running_mean").value;
    const Tensor& rv = store.at(bn.name + ".running_var").value;
    for (std::size_t c = 0; c < ch; ++c) {
      mu[c] = rm[c];
      var[c] = rv[c];
    }
  }
  std::vector<double> sign(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    inv_s[c] = 1.0 / std::sqrt(var[c] + bn.epsilon);
    sign[c] = gv[c] >= 0.0 ? 1.0 : -1.0;
  }

  const int threads = tape.options().threads;
  std::vector<std::size_t> best =
      tape.options().search == SearchPrecision::kFloat32
          ? search_rows<float>(hv, wv, sign, segment_rows, threads)
          : search_rows<double>(hv, wv, sign, segment_rows, threads);

  // Channel-major copy of the weight so per-channel dot products are contiguous.
  RowMatrix wt = W.transpose();
  Tensor out({segments, ch});
  std::vector<double> xhat(segments * ch);
  std::vector<std::uint8_t> active(segments * ch);
  for (std::size_t s = 0; s < segments; ++s) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t k = s * ch + c;
      const double* hr = hv.data() + best[k] * feat;
      const double* wc = wt.data() + c * feat;
      double z = 0.0;
      for (std::size_t f = 0; f < feat; ++f) z += hr[f] * wc[f];
      z += bv[c];
      xhat[k] = (z - mu[c]) * inv_s[c];
      const double y = gv[c] * xhat[k] + betav[c];
      active[k] = y > 0.0;
      out[k] = active[k] ? y : 0.0;
      tape.note_branch(best[k] - s * segment_rows);
    }
  }
  tape.note_branches(active);

  return tape.record(
      "pooled_linear_bn_relu", std::move(out), {h, weight, bias, gamma, beta},
      [=, best = std::move(best), xhat = std::move(xhat), active = std::move(active),
       cw = std::move(cw), wt = std::move(wt)](Tape& t, const Tensor&, const Tensor& g) {
        const Tensor& hv = t.value(h);
        const Tensor& wv = t.value(weight);
        const Tensor& gv = t.value(gamma);
        const ConstMap W(wv.data(), feat, ch);
        const double n = static_cast<double>(rows);

        std::vector<double> sum_g(ch, 0.0), sum_gx(ch, 0.0), sigma(segments * ch);
        for (std::size_t s = 0; s < segments; ++s)
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t k = s * ch + c;
            const double gs = active[k] ? g[k] : 0.0;
            sum_g[c] += gs;
            sum_gx[c] += gs * xhat[k];
            sigma[k] = gv[c] * gs * inv_s[c];
          }
        if (t.requires_grad(gamma)) {
          Tensor& gg = t.grad(gamma);
          for (std::size_t c = 0; c < ch; ++c) gg[c] += sum_gx[c];
        }
        if (t.requires_grad(beta)) {
          Tensor& gb = t.grad(beta);
          for (std::size_t c = 0; c < ch; ++c) gb[c] += sum_g[c];
        }
        // dz = S - 1 alpha^T - (H - 1 hbar^T) W diag(kappa), with S sparse at
        // the pooled rows. In eval mode only S remains.
        std::vector<double> alpha(ch, 0.0), kappa(ch, 0.0);
        if (train) {
          for (std::size_t c = 0; c < ch; ++c) {
            alpha[c] = gv[c] * sum_g[c] / n * inv_s[c];
            kappa[c] = gv[c] * sum_gx[c] / n * inv_s[c] * inv_s[c];
          }
        }
        if (t.requires_grad(bias)) {
          Tensor& gb = t.grad(bias);
          for (std::size_t c = 0; c < ch; ++c) {
            double acc = 0.0;
            for (std::size_t s = 0; s < segments; ++s) acc += sigma[s * ch + c];
            gb[c] += acc - n * alpha[c];
          }
        }
        if (t.requires_grad(weight)) {
          Map dW(t.grad(weight).data(), feat, ch);
          RowMatrix dwt = RowMatrix::Zero(ch, feat);
          for (std::size_t s = 0; s < segments; ++s)
            for (std::size_t c = 0; c < ch; ++c) {
              const std::size_t k = s * ch + c;
              if (sigma[k] == 0.0) continue;
              const double* hr = hv.data() + best[k] * feat;
              double* dc = dwt.data() + c * feat;
              for (std::size_t f = 0; f < feat; ++f) dc[f] += sigma[k] * hr[f];
            }
          dW += dwt.transpose();
          if (train) {
            for (std::size_t f = 0; f < feat; ++f)
              for (std::size_t c = 0; c < ch; ++c)
                dW(f, c) -= n * (hbar[f] * alpha[c] + cw(f, c) * kappa[c]);
          }
        }
        if (t.requires_grad(h)) {
          Tensor& gh = t.grad(h);
          for (std::size_t s = 0; s < segments; ++s)
            for (std::size_t c = 0; c < ch; ++c) {
              const std::size_t k = s * ch + c;
              if (sigma[k] == 0.0) continue;
              double* dr = gh.data() + best[k] * feat;
              const double* wc = wt.data() + c * feat;
              for (std::size_t f = 0; f < feat; ++f) dr[f] += sigma[k] * wc[f];
            }
          if (train) {
            Eigen::VectorXd wa = W * Eigen::Map<const Eigen::VectorXd>(alpha.data(), ch);
            const RowMatrix m = W * Eigen::Map<const Eigen::VectorXd>(kappa.data(), ch).asDiagonal() *
                                W.transpose();
            RowMatrix hc = ConstMap(hv.data(), rows, feat);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t f = 0; f < feat; ++f) hc(r, f) -= hbar[f];
            const RowMatrix corr = hc * m;
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t f = 0; f < feat; ++f) gh[r * feat + f] -= wa[f] + corr(r, f);
          }
        }
      });
}

}  // namespace pcaps::ops
