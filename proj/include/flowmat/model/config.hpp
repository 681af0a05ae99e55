#pragma once

#include <cstdint>
#include <string>

#include "flowmat/common/key_values.hpp"
#include "flowmat/quantizer/quantizer.hpp"

namespace flowmat::model {

// How the attention-logit bias treats masked keys.
//   paper_literal: +1 on kept columns, 0 on masked ones (a soft reweighting).
//   hard: 0 on kept columns, -1e9 on masked ones (a true mask).
enum class MaskMode { paper_literal, hard };
enum class MaskTokenInit { zero, randn };
// How the m compressed tokens are formed from the N encoded ones.
enum class TokenReduction { query_topk, dense_projection, group_merge };
enum class QuantScheme { none, uniform, vq };

inline constexpr double kHardMaskBias = -1e9;

inline const char* to_string(MaskMode m) { return m == MaskMode::hard ? "hard" : "paper_literal"; }
inline const char* to_string(MaskTokenInit m) { return m == MaskTokenInit::zero ? "zero" : "randn"; }
inline const char* to_string(TokenReduction r) {
  switch (r) {
    case TokenReduction::query_topk: return "query_topk";
    case TokenReduction::dense_projection: return "dense_projection";
    case TokenReduction::group_merge: return "group_merge";
  }
  return "?";
}
inline const char* to_string(QuantScheme q) {
  switch (q) {
    case QuantScheme::none: return "none";
    case QuantScheme::uniform: return "uniform";
    case QuantScheme::vq: return "vq";
  }
  return "?";
}

inline MaskMode parse_mask_mode(const std::string& s) {
  if (s == "hard") return MaskMode::hard;
  if (s == "paper_literal") return MaskMode::paper_literal;
  throw ConfigError("unknown mask mode: " + s);
}
inline MaskTokenInit parse_mask_token_init(const std::string& s) {
  if (s == "zero") return MaskTokenInit::zero;
  if (s == "randn") return MaskTokenInit::randn;
  throw ConfigError("unknown mask token init: " + s);
}
inline TokenReduction parse_token_reduction(const std::string& s) {
  if (s == "query_topk") return TokenReduction::query_topk;
  if (s == "dense_projection") return TokenReduction::dense_projection;
  if (s == "group_merge") return TokenReduction::group_merge;
  throw ConfigError("unknown token reduction: " + s);
}
inline QuantScheme parse_quant_scheme(const std::string& s) {
  if (s == "none" || s == "float") return QuantScheme::none;
  if (s == "uniform") return QuantScheme::uniform;
  if (s == "vq") return QuantScheme::vq;
  throw ConfigError("unknown quantizer scheme: " + s);
}

struct ModelConfig {
  // Sequence geometry: N tokens of width token_dim. For the estimation model
  // N is the subcarrier count and pilot_tokens the number of pilot tones.
  std::size_t n_tokens = 13;
  std::size_t token_dim = 64;
  std::size_t pilot_tokens = 0;

  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t encoder_depth = 3;  // (depth - 1) ATT blocks + one MAT block
  std::size_t decoder_depth = 3;  // first block carries the inverse mask
  std::size_t mlp_expansion = 2;

  std::size_t keep = 8;  // m
  std::size_t d_q = 4;
  MaskMode mask_mode = MaskMode::hard;
  MaskTokenInit mask_token_init = MaskTokenInit::zero;
  bool mask_token_trainable = true;
  bool learnable_query = true;
  bool share_projections = false;  // decoder output reuses encoder input weights
  bool align_phase = true;         // feedback input rows referenced to antenna 0
  TokenReduction reduction = TokenReduction::query_topk;

  std::size_t denoiser_blocks = 2;
  std::size_t denoiser_expansion = 2;

  QuantScheme quant = QuantScheme::none;
  quant::UniformQuantizerSpec uniform{2, -1.0, 1.0};
  std::size_t vq_size = 256;
  double vq_beta = 0.25;

  double pos_init_std = 0.02;
  std::uint64_t init_seed = 1;

  std::size_t head_dim() const { return d_model / n_heads; }

  std::size_t payload_bits() const {
    switch (quant) {
      case QuantScheme::uniform: return quant::payload_bits_uniform(keep, d_q, uniform.bits);
      case QuantScheme::vq: return quant::payload_bits_vq(keep, vq_size);
      case QuantScheme::none: return keep * d_q * 64;
    }
    return 0;
  }

  void validate() const {
    if (n_tokens == 0 || token_dim == 0) throw ConfigError("model: token geometry must be >= 1");
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
      throw ConfigError("model: d_model must be a positive multiple of n_heads");
    if (encoder_depth == 0 || decoder_depth == 0) throw ConfigError("model: depths must be >= 1");
    if (mlp_expansion == 0 || denoiser_expansion == 0)
      throw ConfigError("model: expansions must be >= 1");
    if (keep == 0 || keep > n_tokens) throw ConfigError("model: keep count must lie in [1, N]");
    if (d_q == 0) throw ConfigError("model: d_q must be >= 1");
    if (pilot_tokens > n_tokens) throw ConfigError("model: more pilots than tokens");
    if (quant == QuantScheme::uniform) uniform.validate();
    if (quant == QuantScheme::vq && !quant::is_power_of_two(vq_size))
      throw ConfigError("model: vq_size must be a power of two");
  }

  KeyValues to_key_values() const {
    KeyValues kv;
    kv.set_uint("model.n_tokens", n_tokens);
    kv.set_uint("model.token_dim", token_dim);
    kv.set_uint("model.pilot_tokens", pilot_tokens);
    kv.set_uint("model.d_model", d_model);
    kv.set_uint("model.n_heads", n_heads);
    kv.set_uint("model.encoder_depth", encoder_depth);
    kv.set_uint("model.decoder_depth", decoder_depth);
    kv.set_uint("model.mlp_expansion", mlp_expansion);
    kv.set_uint("model.keep", keep);
    kv.set_uint("model.d_q", d_q);
    kv.set("model.mask_mode", to_string(mask_mode));
    kv.set("model.mask_token_init", to_string(mask_token_init));
    kv.set_bool("model.mask_token_trainable", mask_token_trainable);
    kv.set_bool("model.learnable_query", learnable_query);
    kv.set_bool("model.share_projections", share_projections);
    kv.set_bool("model.align_phase", align_phase);
    kv.set("model.reduction", to_string(reduction));
    kv.set_uint("model.denoiser_blocks", denoiser_blocks);
    kv.set_uint("model.denoiser_expansion", denoiser_expansion);
    kv.set("quant.scheme", to_string(quant));
    kv.set_uint("quant.bits", uniform.bits);
    kv.set_double("quant.lo", uniform.lo);
    kv.set_double("quant.hi", uniform.hi);
    kv.set_uint("quant.vq_size", vq_size);
    kv.set_double("quant.vq_beta", vq_beta);
    kv.set_double("model.pos_init_std", pos_init_std);
    kv.set_uint("model.init_seed", init_seed);
    return kv;
  }

  // Missing keys keep their defaults.
  static ModelConfig from_key_values(const KeyValues& kv) {
    ModelConfig c;
    c.n_tokens = kv.get_uint("model.n_tokens", c.n_tokens);
    c.token_dim = kv.get_uint("model.token_dim", c.token_dim);
    c.pilot_tokens = kv.get_uint("model.pilot_tokens", c.pilot_tokens);
    c.d_model = kv.get_uint("model.d_model", c.d_model);
    c.n_heads = kv.get_uint("model.n_heads", c.n_heads);
    c.encoder_depth = kv.get_uint("model.encoder_depth", c.encoder_depth);
    c.decoder_depth = kv.get_uint("model.decoder_depth", c.decoder_depth);
    c.mlp_expansion = kv.get_uint("model.mlp_expansion", c.mlp_expansion);
    c.keep = kv.get_uint("model.keep", c.keep);
    c.d_q = kv.get_uint("model.d_q", c.d_q);
    c.mask_mode = parse_mask_mode(kv.get_string("model.mask_mode", to_string(c.mask_mode)));
    c.mask_token_init =
        parse_mask_token_init(kv.get_string("model.mask_token_init", to_string(c.mask_token_init)));
    c.mask_token_trainable = kv.get_bool("model.mask_token_trainable", c.mask_token_trainable);
    c.learnable_query = kv.get_bool("model.learnable_query", c.learnable_query);
    c.share_projections = kv.get_bool("model.share_projections", c.share_projections);
    c.align_phase = kv.get_bool("model.align_phase", c.align_phase);
    c.reduction = parse_token_reduction(kv.get_string("model.reduction", to_string(c.reduction)));
    c.denoiser_blocks = kv.get_uint("model.denoiser_blocks", c.denoiser_blocks);
    c.denoiser_expansion = kv.get_uint("model.denoiser_expansion", c.denoiser_expansion);
    c.quant = parse_quant_scheme(kv.get_string("quant.scheme", to_string(c.quant)));
    c.uniform.bits = static_cast<unsigned>(kv.get_uint("quant.bits", c.uniform.bits));
    c.uniform.lo = kv.get_double("quant.lo", c.uniform.lo);
    c.uniform.hi = kv.get_double("quant.hi", c.uniform.hi);
    c.vq_size = kv.get_uint("quant.vq_size", c.vq_size);
    c.vq_beta = kv.get_double("quant.vq_beta", c.vq_beta);
    c.pos_init_std = kv.get_double("model.pos_init_std", c.pos_init_std);
    c.init_seed = kv.get_uint("model.init_seed", c.init_seed);
    return c;
  }
};

}  // namespace flowmat::model
