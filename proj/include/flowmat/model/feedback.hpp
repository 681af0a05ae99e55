/**
 * @file feedback.hpp
 * @brief Eigenvector compression and feedback model.
 *
 * UE side: tokenize -> encode (ATT.., MAT) -> active selection of m rows ->
 * latent projection to d_q -> quantize.  BS side: dequantize -> expand to
 * d_model -> mask-token insertion -> decode -> detokenize -> unit rows.
 *
 * The kept positions follow from the trained query (or from the fixed
 * placement of the alternative reductions) and are model metadata known to
 * both sides; only quantized values travel in the payload.
 */
#pragma once

#include <optional>
#include <utility>

#include "flowmat/channel/types.hpp"
#include "flowmat/model/network.hpp"
#include "flowmat/model/tokens.hpp"
#include "flowmat/quantizer/quantizer.hpp"

namespace flowmat::model {

struct FeedbackForward {
  Tensor tokens;                         // reconstruction [N x d_tok], not renormalized
  Tensor latent;                         // [m x d_q] before quantization
  Tensor latent_hat;                     // what the decoder side sees
  std::vector<std::size_t> kept_indices;
  std::vector<std::uint32_t> indices;    // quantizer cells / codewords
  std::optional<quant::VqLosses> vq;
};

class FeedbackModel {
 public:
  explicit FeedbackModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Initializer init(cfg_.init_seed);
    create_encoder(params_, init, cfg_);
    params_.add("query", init.normal({cfg_.n_tokens}, 1.0, cfg_.learnable_query));
    if (cfg_.reduction == TokenReduction::dense_projection)
      params_.add("reduce.w", init.normal({cfg_.keep, cfg_.n_tokens},
                                          1.0 / std::sqrt(static_cast<double>(cfg_.n_tokens))));
    create_linear(params_, init, "latent", cfg_.d_model, cfg_.d_q);
    create_linear(params_, init, "expand", cfg_.d_q, cfg_.d_model);
    params_.add("mask_token", cfg_.mask_token_init == MaskTokenInit::zero
                                  ? init.zeros({cfg_.d_model}, cfg_.mask_token_trainable)
                                  : init.normal({cfg_.d_model}, 1.0, cfg_.mask_token_trainable));
    create_decoder(params_, init, cfg_, cfg_.n_tokens);
    if (cfg_.quant == QuantScheme::vq)
      params_.add("vq.codebook", init.normal({cfg_.vq_size, cfg_.d_q}, 1.0));
  }

  // Rebuilds a model around stored parameters; shapes must match `cfg`.
  FeedbackModel(ModelConfig cfg, const std::map<std::string, Tensor>& stored)
      : FeedbackModel(std::move(cfg)) {
    for (auto& [name, t] : params_.entries()) {
      auto it = stored.find(name);
      if (it == stored.end()) throw FormatError("checkpoint lacks parameter " + name);
      if (it->second.shape() != t.shape())
        throw FormatError("checkpoint parameter " + name + " has shape " +
                          shape_str(it->second.shape()) + ", expected " + shape_str(t.shape()));
      std::copy(it->second.values().begin(), it->second.values().end(), t.mutable_values().begin());
    }
    if (stored.size() != params_.entries().size())
      throw FormatError("checkpoint carries unexpected parameters");
  }

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  std::vector<std::size_t> kept_indices() const {
    if (cfg_.reduction == TokenReduction::query_topk)
      return top_k_indices(params_.get("query").values(), cfg_.keep);
    return spread_positions(cfg_.n_tokens, cfg_.keep);
  }

  MaskPlan mask_plan() const {
    MaskPlan plan;
    plan.query = params_.get("query");
    plan.kept_indices = kept_indices();
    plan.masked_indices = complement(plan.kept_indices, cfg_.n_tokens);
    plan.bias = build_mask_bias(plan.kept_indices, cfg_.n_tokens, cfg_.mask_mode);
    return plan;
  }

  quant::VqCodebook codebook() const {
    return quant::VqCodebook{params_.get("vq.codebook"), vq_usage_, cfg_.vq_beta};
  }

  // Encoder side up to the continuous latent. Returns (latent, kept).
  std::pair<Tensor, std::vector<std::size_t>> encode_latent(const Tensor& tokens) const {
    const auto kept = kept_indices();
    const Tensor bias = build_mask_bias(kept, cfg_.n_tokens, cfg_.mask_mode);
    // Unit-norm rows have entries near 1/sqrt(token_dim); lift them to unit
    // scale so the residual stream is not swamped by the first block.
    const Tensor z = encode(params_, cfg_, scale(tokens, std::sqrt(static_cast<double>(cfg_.token_dim))), &bias);
    Tensor z_part;
    switch (cfg_.reduction) {
      case TokenReduction::query_topk:
        z_part = select_active(z, params_.get("query"), cfg_.keep).z_part;
        break;
      case TokenReduction::dense_projection:
        z_part = matmul(params_.get("reduce.w"), z);
        break;
      case TokenReduction::group_merge:
        z_part = group_merge(z, cfg_.keep);
        break;
    }
    return {apply_linear(params_, "latent", z_part), kept};
  }

  // Decoder side from a (dequantized) latent.
  Tensor decode_latent(const Tensor& latent_hat, const std::vector<std::size_t>& kept) const {
    const Tensor expanded = apply_linear(params_, "expand", latent_hat);
    const Tensor y3 = insert_mask_tokens(expanded, kept, cfg_.n_tokens, params_.get("mask_token"));
    return decode(params_, cfg_, y3, kept);
  }

  // Full differentiable pass. With `quantize` false the latent goes through
  // unquantized whatever the configured scheme (float mode).
  FeedbackForward forward(const Tensor& tokens, bool quantize = true) const {
    FeedbackForward out;
    std::tie(out.latent, out.kept_indices) = encode_latent(tokens);
    out.latent_hat = out.latent;
    if (quantize && cfg_.quant == QuantScheme::uniform) {
      const auto q = quant::uniform_quantize(out.latent.values(), cfg_.uniform);
      out.indices = q.indices;
      out.latent_hat = straight_through(
          out.latent, quant::uniform_dequantize(q.indices, cfg_.uniform));
    } else if (quantize && cfg_.quant == QuantScheme::vq) {
      auto cb = codebook();
      const auto a = quant::vq_assign(out.latent, cb);
      vq_usage_ = cb.usage;
      out.indices = a.indices;
      out.latent_hat = quant::vq_straight_through(out.latent, cb, a.indices);
      out.vq = quant::vq_losses(out.latent, cb, a.indices);
    }
    out.tokens = decode_latent(out.latent_hat, out.kept_indices);
    return out;
  }

  // UE side: eigenvectors -> payload. Requires a quantizing configuration.
  quant::BitPayload compress(const channel::EigenMatrix& w) const {
    const auto [latent, kept] = encode_latent(input_tokens(w));
    quant::BitPayload payload;
    if (cfg_.quant == QuantScheme::uniform) {
      payload = quant::uniform_quantize(latent.values(), cfg_.uniform).payload;
    } else if (cfg_.quant == QuantScheme::vq) {
      auto cb = codebook();
      payload = quant::vq_assign(latent, cb).payload;
    } else {
      throw ValidationError("compress: model is configured without a quantizer");
    }
    if (payload.bit_length != cfg_.payload_bits())
      throw ValidationError("compress: payload length disagrees with the configured bit budget");
    return payload;
  }

  // BS side: payload -> unit-norm eigenvectors.
  channel::EigenMatrix reconstruct(const quant::BitPayload& payload) const {
    if (payload.bit_length != cfg_.payload_bits())
      throw ValidationError("reconstruct: payload length disagrees with the configured bit budget");
    std::vector<double> latent;
    if (payload.scheme == quant::Scheme::uniform && cfg_.quant == QuantScheme::uniform) {
      const auto idx = quant::unpack_bits(payload.bytes, payload.uniform.bits, cfg_.keep * cfg_.d_q);
      latent = quant::uniform_dequantize(idx, payload.uniform);
    } else if (payload.scheme == quant::Scheme::vq && cfg_.quant == QuantScheme::vq) {
      if (payload.codebook_size != cfg_.vq_size)
        throw ValidationError("reconstruct: codebook size mismatch");
      const auto idx =
          quant::unpack_bits(payload.bytes, quant::log2_exact(payload.codebook_size), cfg_.keep);
      latent = quant::vq_lookup(codebook(), idx);
    } else {
      throw ValidationError("reconstruct: payload scheme does not match the model");
    }
    const Tensor tokens =
        decode_latent(Tensor({cfg_.keep, cfg_.d_q}, std::move(latent)), kept_indices());
    return finish(tokens);
  }

  // Float-mode reconstruction (no quantizer), for capacity checks.
  channel::EigenMatrix reconstruct_float(const channel::EigenMatrix& w) const {
    return finish(forward(input_tokens(w), false).tokens);
  }

  // Model input for an eigen matrix; the per-row phase is free because Rho
  // ignores it.
  Tensor input_tokens(const channel::EigenMatrix& w) const {
    check_input(w);
    if (!cfg_.align_phase) return tokenize(w).tokens;
    auto aligned = w;
    align_reference_phase(aligned);
    return tokenize(aligned).tokens;
  }

  std::size_t n_tx() const { return cfg_.token_dim / 2; }

 private:
  void check_input(const channel::EigenMatrix& w) const {
    if (w.n_subband != cfg_.n_tokens || 2 * w.n_tx != cfg_.token_dim)
      throw DimensionError("feedback model: eigen matrix does not match the configuration");
  }
  channel::EigenMatrix finish(const Tensor& tokens) const {
    auto w = detokenize_eigen(tokens, n_tx());
    normalize_rows(w);
    return w;
  }

  ModelConfig cfg_;
  ParamStore params_;
  mutable std::vector<std::uint64_t> vq_usage_;
};

struct FeedbackResult {
  std::optional<quant::BitPayload> payload;  // empty in float mode
  channel::EigenMatrix reconstructed;
};

// compress + reconstruct, or the float path when no quantizer is configured.
inline FeedbackResult feedback_pipeline(const channel::EigenMatrix& w, const FeedbackModel& model) {
  for (std::size_t s = 0; s < w.n_subband; ++s) {
    double n2 = 0.0;
    for (std::size_t t = 0; t < w.n_tx; ++t) n2 += std::norm(w(s, t));
    if (std::abs(n2 - 1.0) > 1e-6) throw ValidationError("feedback: input rows must be unit-norm");
  }
  if (model.config().quant == QuantScheme::none) return {std::nullopt, model.reconstruct_float(w)};
  auto payload = model.compress(w);
  auto rec = model.reconstruct(payload);
  return {std::move(payload), std::move(rec)};
}

}  // namespace flowmat::model
