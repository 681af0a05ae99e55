/**
 * @file tokens.hpp
 * @brief Frequency-unit tokenization: one token per subcarrier (channel) or
 *        per subband (eigenvectors), real parts followed by imaginary parts.
 */
#pragma once

#include "flowmat/channel/types.hpp"
#include "flowmat/numerics/tensor.hpp"

namespace flowmat::model {

enum class TokenOrigin { channel, eigen, latent };

struct TokenSequence {
  Tensor tokens;  // [N x d_tok]
  TokenOrigin origin = TokenOrigin::channel;

  std::size_t count() const { return tokens.rows(); }
  std::size_t width() const { return tokens.cols(); }
};

// Eigen rows [S x N_t] -> tokens [S x 2 N_t].
inline TokenSequence tokenize(const channel::EigenMatrix& w) {
  if (w.n_subband == 0 || w.n_tx == 0 || w.data.size() != w.n_subband * w.n_tx)
    throw DimensionError("tokenize: malformed eigen matrix");
  const std::size_t d = 2 * w.n_tx;
  std::vector<double> v(w.n_subband * d);
  for (std::size_t s = 0; s < w.n_subband; ++s)
    for (std::size_t t = 0; t < w.n_tx; ++t) {
      v[s * d + t] = w(s, t).real();
      v[s * d + w.n_tx + t] = w(s, t).imag();
    }
  return {Tensor({w.n_subband, d}, std::move(v)), TokenOrigin::eigen};
}

// Channel [rx, k, tx] -> tokens [N_c x 2 N_rx N_t]; within a token the
// (rx, tx) pairs are ordered rx-major.
inline TokenSequence tokenize(const channel::ChannelTensor& h) {
  if (h.n_rx == 0 || h.n_sub == 0 || h.n_tx == 0 || h.data.size() != h.n_rx * h.n_sub * h.n_tx)
    throw DimensionError("tokenize: malformed channel tensor");
  const std::size_t half = h.n_rx * h.n_tx, d = 2 * half;
  std::vector<double> v(h.n_sub * d);
  for (std::size_t k = 0; k < h.n_sub; ++k)
    for (std::size_t r = 0; r < h.n_rx; ++r)
      for (std::size_t t = 0; t < h.n_tx; ++t) {
        const auto z = h(r, k, t);
        v[k * d + r * h.n_tx + t] = z.real();
        v[k * d + half + r * h.n_tx + t] = z.imag();
      }
  return {Tensor({h.n_sub, d}, std::move(v)), TokenOrigin::channel};
}

inline channel::EigenMatrix detokenize_eigen(const Tensor& tokens, std::size_t n_tx) {
  if (tokens.dim() != 2 || tokens.cols() != 2 * n_tx)
    throw DimensionError("detokenize: token width does not match 2 * n_tx");
  channel::EigenMatrix w(tokens.rows(), n_tx);
  const std::size_t d = 2 * n_tx;
  for (std::size_t s = 0; s < tokens.rows(); ++s)
    for (std::size_t t = 0; t < n_tx; ++t) w(s, t) = {tokens[s * d + t], tokens[s * d + n_tx + t]};
  return w;
}

inline channel::ChannelTensor detokenize_channel(const Tensor& tokens, std::size_t n_rx,
                                                 std::size_t n_tx) {
  const std::size_t half = n_rx * n_tx, d = 2 * half;
  if (tokens.dim() != 2 || tokens.cols() != d)
    throw DimensionError("detokenize: token width does not match 2 * n_rx * n_tx");
  channel::ChannelTensor h(n_rx, tokens.rows(), n_tx);
  for (std::size_t k = 0; k < tokens.rows(); ++k)
    for (std::size_t r = 0; r < n_rx; ++r)
      for (std::size_t t = 0; t < n_tx; ++t)
        h(r, k, t) = {tokens[k * d + r * n_tx + t], tokens[k * d + half + r * n_tx + t]};
  return h;
}

// Rotates each row so its first-antenna entry is real nonnegative. Rows of a
// steering-vector channel then share one phase reference across subbands.
// Rows with a zero first entry are left as-is.
inline void align_reference_phase(channel::EigenMatrix& w) {
  for (std::size_t s = 0; s < w.n_subband; ++s) {
    const auto z = w(s, 0);
    const double a = std::abs(z);
    if (a == 0.0) continue;
    const auto r = std::conj(z) / a;
    for (std::size_t t = 0; t < w.n_tx; ++t) w(s, t) *= r;
  }
}

// Scales every eigen row to unit norm; zero rows are left as-is.
inline void normalize_rows(channel::EigenMatrix& w) {
  for (std::size_t s = 0; s < w.n_subband; ++s) {
    double n2 = 0.0;
    for (std::size_t t = 0; t < w.n_tx; ++t) n2 += std::norm(w(s, t));
    if (n2 == 0.0) continue;
    const double inv = 1.0 / std::sqrt(n2);
    for (std::size_t t = 0; t < w.n_tx; ++t) w(s, t) *= inv;
  }
}

}  // namespace flowmat::model
