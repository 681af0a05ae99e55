#pragma once

#include "flowmat/numerics/eigen.hpp"
#include "flowmat/numerics/ops.hpp"

namespace flowmat::train {

// Column [2n x 1] scaled to unit norm.
inline Tensor unit_column(const Tensor& v) {
  const Tensor norm = reshape(sqrt(sum(square(v))), {1, 1});
  return matmul(v, div(Tensor::full({1, 1}, 1.0), norm));
}

// Differentiable subband precoders from channel tokens [N_c x 2 N_rx N_t]
// (rx-major, real half then imaginary half). Each subband's averaged Gram
// matrix is formed in the real embedding [[A, -B], [B, A]] of A + jB. The
// eigenvector iteration starts from the exact (constant) dominant eigenvector
// and runs `iterations` differentiable power steps, so the forward value is
// the true precoder while gradients follow the power map. With
// `align_first_antenna` the start vector is referenced to antenna 0, matching
// the feedback model's input convention. Returns eigen tokens [S x 2 N_t].
inline Tensor differentiable_precoders(const Tensor& channel_tokens, std::size_t n_rx,
                                       std::size_t n_tx, std::size_t n_subband,
                                       std::size_t iterations = 10,
                                       bool align_first_antenna = false) {
  const std::size_t half = n_rx * n_tx;
  const std::size_t n_sub = channel_tokens.rows();
  if (channel_tokens.dim() != 2 || channel_tokens.cols() != 2 * half || n_subband == 0 ||
      n_sub % n_subband != 0)
    throw DimensionError("differentiable_precoders: token layout does not match the geometry");
  const std::size_t width = n_sub / n_subband;
  std::vector<Tensor> rows;
  rows.reserve(n_subband);
  for (std::size_t s = 0; s < n_subband; ++s) {
    Tensor gram_sum;
    for (std::size_t k = s * width; k < (s + 1) * width; ++k) {
      const Tensor tok = slice_rows(channel_tokens, k, 1);
      const Tensor re = reshape(slice_cols(tok, 0, half), {n_rx, n_tx});
      const Tensor im = reshape(slice_cols(tok, half, half), {n_rx, n_tx});
      const Tensor h = concat_rows({concat_cols({re, scale(im, -1.0)}), concat_cols({im, re})});
      const Tensor g = matmul(transpose(h), h);
      gram_sum = gram_sum.defined() ? add(gram_sum, g) : g;
    }
    const Tensor g = scale(gram_sum, 1.0 / static_cast<double>(width));

    ComplexMatrix c(n_tx, n_tx);
    for (std::size_t i = 0; i < n_tx; ++i)
      for (std::size_t j = 0; j < n_tx; ++j) {
        const double a = 0.5 * (g.at(i, j) + g.at(j, i));
        const double b = 0.5 * (g.at(n_tx + i, j) - g.at(n_tx + j, i));
        c.set(i, j, {a, b});
      }
    auto pair = hermitian_top_eigpair(c);
    if (align_first_antenna && std::abs(pair.vector[0]) > 0.0) {
      const auto r = std::conj(pair.vector[0]) / std::abs(pair.vector[0]);
      for (auto& z : pair.vector) z *= r;
    }
    std::vector<double> start(2 * n_tx);
    for (std::size_t t = 0; t < n_tx; ++t) {
      start[t] = pair.vector[t].real();
      start[n_tx + t] = pair.vector[t].imag();
    }
    Tensor v({2 * n_tx, 1}, std::move(start));
    for (std::size_t it = 0; it < iterations; ++it) v = unit_column(matmul(g, v));
    rows.push_back(reshape(v, {1, 2 * n_tx}));
  }
  return concat_rows(rows);
}

}  // namespace flowmat::train
