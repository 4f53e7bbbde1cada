#pragma once

// Fixed-order dense kernels. Each output element is accumulated over the
// inner index in ascending order, and each output row depends only on the
// matching input row, so results are bit-identical under row slicing and
// reordering.

#include <algorithm>
#include <cstddef>

namespace pcaps::kernels {

namespace detail {
constexpr std::size_t kTile = 32;

// acc[0..w) += sum over p of s(p) * row(p)[0..w), p ascending.
template <std::size_t W, class Scale, class Row>
inline void accumulate_tile(double* acc, std::size_t k, Scale&& s, Row&& row) {
  double r[W];
  for (std::size_t j = 0; j < W; ++j) r[j] = acc[j];
  for (std::size_t p = 0; p < k; ++p) {
    const double sp = s(p);
    const double* bp = row(p);
    for (std::size_t j = 0; j < W; ++j) r[j] += sp * bp[j];
  }
  for (std::size_t j = 0; j < W; ++j) acc[j] = r[j];
}

template <class Scale, class Row>
inline void accumulate_ragged(double* acc, std::size_t w, std::size_t k, Scale&& s, Row&& row) {
  for (std::size_t p = 0; p < k; ++p) {
    const double sp = s(p);
    const double* bp = row(p);
    for (std::size_t j = 0; j < w; ++j) acc[j] += sp * bp[j];
  }
}
}  // namespace detail

// c (n x m) += a (n x k) * b (k x m)
inline void gemm_nn_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                        std::size_t m) {
  using detail::kTile;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    auto scale = [ai](std::size_t p) { return ai[p]; };
    std::size_t j0 = 0;
    for (; j0 + kTile <= m; j0 += kTile) {
      detail::accumulate_tile<kTile>(c + i * m + j0, k, scale, [b, m, j0](std::size_t p) { return b + p * m + j0; });
    }
    if (j0 < m) {
      detail::accumulate_ragged(c + i * m + j0, m - j0, k, scale,
                                [b, m, j0](std::size_t p) { return b + p * m + j0; });
    }
  }
}

// c (k x m) += a^T b, with a (n x k) and b (n x m)
inline void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                        std::size_t m) {
  using detail::kTile;
  for (std::size_t p = 0; p < k; ++p) {
    auto scale = [a, k, p](std::size_t i) { return a[i * k + p]; };
    std::size_t j0 = 0;
    for (; j0 + kTile <= m; j0 += kTile) {
      detail::accumulate_tile<kTile>(c + p * m + j0, n, scale, [b, m, j0](std::size_t i) { return b + i * m + j0; });
    }
    if (j0 < m) {
      detail::accumulate_ragged(c + p * m + j0, m - j0, n, scale,
                                [b, m, j0](std::size_t i) { return b + i * m + j0; });
    }
  }
}

// out (m x n) = transpose of in (n x m)
inline void transpose(const double* in, double* out, std::size_t n, std::size_t m) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < n; i0 += kBlock)
    for (std::size_t j0 = 0; j0 < m; j0 += kBlock)
      for (std::size_t i = i0; i < std::min(n, i0 + kBlock); ++i)
        for (std::size_t j = j0; j < std::min(m, j0 + kBlock); ++j) out[j * n + i] = in[i * m + j];
}

}  // namespace pcaps::kernels
