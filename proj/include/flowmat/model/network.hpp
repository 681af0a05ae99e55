/**
 * @file network.hpp
 * @brief Encoder, decoder and pilot denoiser built from the blocks in
 *        blocks.hpp. Parameters live in a ParamStore under fixed prefixes:
 *
 *   enc.in, enc.pos, enc.blk<i>, enc.ln_f, enc.out    encoder (W1, Pos, ATT.., MAT, W2)
 *   dec.in, dec.pos, dec.blk<i>, dec.ln_f, dec.out    decoder (W3, Pos, blocks, output map)
 *   den.in, den.blk<i>, den.out                       MLP-Mixer denoiser
 */
#pragma once

#include <string>

#include "flowmat/model/blocks.hpp"
#include "flowmat/model/config.hpp"
#include "flowmat/model/mask.hpp"

namespace flowmat::model {

inline std::string block_name(const std::string& stage, std::size_t i) {
  return stage + ".blk" + std::to_string(i);
}

inline void create_encoder(ParamStore& ps, Initializer& init, const ModelConfig& cfg) {
  const std::size_t d = cfg.d_model;
  create_linear(ps, init, "enc.in", cfg.token_dim, d);
  ps.add("enc.pos", init.normal({cfg.n_tokens, d}, cfg.pos_init_std));
  for (std::size_t i = 0; i < cfg.encoder_depth; ++i)
    create_attention_block(ps, init, block_name("enc", i), d, cfg.mlp_expansion);
  create_layer_norm(ps, "enc.ln_f", d);
  create_linear(ps, init, "enc.out", d, d);
}

// Decoder over `n` positions. With shared projections the output map reuses
// the transposed encoder input weight and only owns a bias.
inline void create_decoder(ParamStore& ps, Initializer& init, const ModelConfig& cfg, std::size_t n) {
  const std::size_t d = cfg.d_model;
  create_linear(ps, init, "dec.in", d, d);
  ps.add("dec.pos", init.normal({n, d}, cfg.pos_init_std));
  for (std::size_t i = 0; i < cfg.decoder_depth; ++i)
    create_attention_block(ps, init, block_name("dec", i), d, cfg.mlp_expansion);
  create_layer_norm(ps, "dec.ln_f", d);
  if (cfg.share_projections)
    ps.add("dec.out.b", init.zeros({cfg.token_dim}));
  else
    create_linear(ps, init, "dec.out", d, cfg.token_dim);
}

// Input projection + Pos, (depth - 1) ATT blocks, one MAT block carrying
// `mat_bias` (a plain ATT block when null), final norm and output projection.
inline Tensor encode(const ParamStore& ps, const ModelConfig& cfg, const Tensor& x,
                     const Tensor* mat_bias) {
  if (x.dim() != 2 || x.rows() != cfg.n_tokens || x.cols() != cfg.token_dim)
    throw DimensionError("encode: expected tokens " + shape_str({cfg.n_tokens, cfg.token_dim}) +
                         ", got " + shape_str(x.shape()));
  Tensor y = add(apply_linear(ps, "enc.in", x), ps.get("enc.pos"));
  for (std::size_t i = 0; i < cfg.encoder_depth; ++i) {
    const bool last = i + 1 == cfg.encoder_depth;
    y = attention_block(ps, block_name("enc", i), y, cfg.n_heads, last ? mat_bias : nullptr);
  }
  return apply_linear(ps, "enc.out", apply_layer_norm(ps, "enc.ln_f", y));
}

// y [n x d_model] -> tokens [n x token_dim]. `first_bias` is applied in the
// first block only; the rest are common ATT blocks.
inline Tensor decode(const ParamStore& ps, const ModelConfig& cfg, const Tensor& y,
                     const Tensor* first_bias, std::vector<Tensor>* first_weights = nullptr) {
  const Tensor& pos = ps.get("dec.pos");
  if (y.dim() != 2 || y.rows() != pos.rows() || y.cols() != cfg.d_model)
    throw DimensionError("decode: expected input " + shape_str(pos.shape()) + ", got " +
                         shape_str(y.shape()));
  Tensor h = add(apply_linear(ps, "dec.in", y), pos);
  for (std::size_t i = 0; i < cfg.decoder_depth; ++i)
    h = attention_block(ps, block_name("dec", i), h, cfg.n_heads, i == 0 ? first_bias : nullptr,
                        i == 0 ? first_weights : nullptr);
  h = apply_layer_norm(ps, "dec.ln_f", h);
  if (cfg.share_projections)
    return add_row_vector(matmul_transposed(h, ps.get("enc.in.w")), ps.get("dec.out.b"));
  return apply_linear(ps, "dec.out", h);
}

// Convenience form that derives the inverse-mask bias from the kept set.
inline Tensor decode(const ParamStore& ps, const ModelConfig& cfg, const Tensor& y,
                     const std::vector<std::size_t>& kept_indices) {
  const Tensor bias = build_decoder_bias(kept_indices, y.rows(), cfg.mask_mode);
  return decode(ps, cfg, y, &bias);
}

inline void create_denoiser(ParamStore& ps, Initializer& init, const ModelConfig& cfg) {
  const std::size_t d = cfg.d_model;
  create_linear(ps, init, "den.in", cfg.token_dim, d);
  for (std::size_t i = 0; i < cfg.denoiser_blocks; ++i)
    create_mixer_block(ps, init, block_name("den", i), cfg.pilot_tokens, d, cfg.denoiser_expansion);
  // Zero output map: the denoiser starts as the identity on its input.
  ps.add("den.out.w", init.zeros({d, cfg.token_dim}));
  ps.add("den.out.b", init.zeros({cfg.token_dim}));
}

// Pilot tokens [N_p x d_tok] -> cleaned pilot tokens of the same shape.
inline Tensor denoise_mixer(const ParamStore& ps, const ModelConfig& cfg, const Tensor& pilots) {
  if (pilots.dim() != 2 || pilots.rows() != cfg.pilot_tokens || pilots.cols() != cfg.token_dim)
    throw DimensionError("denoise_mixer: expected pilots " +
                         shape_str({cfg.pilot_tokens, cfg.token_dim}) + ", got " +
                         shape_str(pilots.shape()));
  Tensor h = apply_linear(ps, "den.in", pilots);
  for (std::size_t i = 0; i < cfg.denoiser_blocks; ++i) h = mixer_block(ps, block_name("den", i), h);
  return add(pilots, apply_linear(ps, "den.out", h));
}

}  // namespace flowmat::model
