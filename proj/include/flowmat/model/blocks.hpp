/**
 * @file blocks.hpp
 * @brief Pre-norm transformer blocks (ATT, and MAT when a logit bias is
 *        supplied) and the MLP-Mixer block used by the pilot denoiser.
 */
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "flowmat/model/params.hpp"
#include "flowmat/numerics/ops.hpp"

namespace flowmat::model {

inline void create_layer_norm(ParamStore& ps, const std::string& prefix, std::size_t d) {
  ps.add(prefix + ".g", Tensor::full({d}, 1.0, true));
  ps.add(prefix + ".b", Tensor::zeros({d}, true));
}

inline Tensor apply_layer_norm(const ParamStore& ps, const std::string& prefix, const Tensor& x) {
  return layer_norm(x, ps.get(prefix + ".g"), ps.get(prefix + ".b"));
}

inline void create_linear(ParamStore& ps, Initializer& init, const std::string& prefix,
                          std::size_t in, std::size_t out) {
  ps.add(prefix + ".w", init.linear(in, out));
  ps.add(prefix + ".b", init.zeros({out}));
}

inline Tensor apply_linear(const ParamStore& ps, const std::string& prefix, const Tensor& x) {
  return add_row_vector(matmul(x, ps.get(prefix + ".w")), ps.get(prefix + ".b"));
}

inline void create_attention_block(ParamStore& ps, Initializer& init, const std::string& prefix,
                                   std::size_t d, std::size_t expansion) {
  create_layer_norm(ps, prefix + ".ln1", d);
  ps.add(prefix + ".attn.wq", init.linear(d, d));
  ps.add(prefix + ".attn.wk", init.linear(d, d));
  ps.add(prefix + ".attn.wv", init.linear(d, d));
  create_linear(ps, init, prefix + ".attn.out", d, d);
  create_layer_norm(ps, prefix + ".ln2", d);
  create_linear(ps, init, prefix + ".mlp.fc1", d, d * expansion);
  create_linear(ps, init, prefix + ".mlp.fc2", d * expansion, d);
}

// Multi-head attention on already-normalized input x [N x d]. Logits of head
// h are (Q_h K_hᵀ + bias) / sqrt(d_head). When `weights` is non-null it
// receives each head's attention matrix.
inline Tensor multi_head_attention(const ParamStore& ps, const std::string& prefix, const Tensor& x,
                                   std::size_t n_heads, const Tensor* bias,
                                   std::vector<Tensor>* weights = nullptr) {
  const std::size_t d = x.cols();
  const std::size_t dh = d / n_heads;
  const Tensor q = matmul(x, ps.get(prefix + ".attn.wq"));
  const Tensor k = matmul(x, ps.get(prefix + ".attn.wk"));
  const Tensor v = matmul(x, ps.get(prefix + ".attn.wv"));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const Tensor qh = n_heads == 1 ? q : slice_cols(q, h * dh, dh);
    const Tensor kh = n_heads == 1 ? k : slice_cols(k, h * dh, dh);
    const Tensor vh = n_heads == 1 ? v : slice_cols(v, h * dh, dh);
    Tensor logits = matmul_transposed(qh, kh);
    if (bias) logits = add(logits, *bias);
    const Tensor att = softmax_rows(scale(logits, inv_sqrt));
    if (weights) weights->push_back(att);
    heads.push_back(matmul(att, vh));
  }
  const Tensor merged = n_heads == 1 ? heads.front() : concat_cols(heads);
  return apply_linear(ps, prefix + ".attn.out", merged);
}

// x + MHA(LN(x)); then + MLP(LN(.)). A non-null bias makes this a MAT block.
inline Tensor attention_block(const ParamStore& ps, const std::string& prefix, const Tensor& x,
                              std::size_t n_heads, const Tensor* bias = nullptr,
                              std::vector<Tensor>* weights = nullptr) {
  const Tensor a = multi_head_attention(ps, prefix, apply_layer_norm(ps, prefix + ".ln1", x),
                                        n_heads, bias, weights);
  const Tensor h = add(x, a);
  const Tensor hidden = gelu(apply_linear(ps, prefix + ".mlp.fc1",
                                          apply_layer_norm(ps, prefix + ".ln2", h)));
  return add(h, apply_linear(ps, prefix + ".mlp.fc2", hidden));
}

// MLP-Mixer block over x [T x d]: token mixing (across rows) then channel
// mixing (across columns), each a residual two-layer GELU MLP.
inline void create_mixer_block(ParamStore& ps, Initializer& init, const std::string& prefix,
                               std::size_t tokens, std::size_t d, std::size_t expansion) {
  create_layer_norm(ps, prefix + ".ln1", d);
  create_linear(ps, init, prefix + ".tok.fc1", tokens, tokens * expansion);
  create_linear(ps, init, prefix + ".tok.fc2", tokens * expansion, tokens);
  create_layer_norm(ps, prefix + ".ln2", d);
  create_linear(ps, init, prefix + ".ch.fc1", d, d * expansion);
  create_linear(ps, init, prefix + ".ch.fc2", d * expansion, d);
}

inline Tensor mixer_block(const ParamStore& ps, const std::string& prefix, const Tensor& x) {
  const Tensor xt = transpose(apply_layer_norm(ps, prefix + ".ln1", x));  // [d x T]
  const Tensor tok = apply_linear(ps, prefix + ".tok.fc2",
                                  gelu(apply_linear(ps, prefix + ".tok.fc1", xt)));
  const Tensor h = add(x, transpose(tok));
  const Tensor ch = apply_linear(ps, prefix + ".ch.fc2",
                                 gelu(apply_linear(ps, prefix + ".ch.fc1",
                                                   apply_layer_norm(ps, prefix + ".ln2", h))));
  return add(h, ch);
}

}  // namespace flowmat::model
