/**
 * @file estimation.hpp
 * @brief Pilot-based channel estimation: MLP-Mixer denoiser on the pilot
 *        tokens, pilot embedding, mask tokens at the remaining subcarriers
 *        and the shared decoder over all N_c positions.
 *
 * Parameters: den.* (denoiser), pe.* (pilot embedding d_tok -> d_model),
 * mask_token, dec.* (decoder).
 */
#pragma once

#include <utility>

#include "flowmat/channel/types.hpp"
#include "flowmat/model/network.hpp"
#include "flowmat/model/tokens.hpp"

namespace flowmat::model {

struct EstimationForward {
  Tensor denoised;  // [N_p x d_tok]
  Tensor tokens;    // [N_c x d_tok]
};

class EstimationModel {
 public:
  EstimationModel(ModelConfig cfg, std::vector<std::size_t> pilot_indices)
      : cfg_(std::move(cfg)), pilots_(std::move(pilot_indices)) {
    cfg_.pilot_tokens = pilots_.size();
    cfg_.validate();
    if (pilots_.empty()) throw ConfigError("estimation model needs pilots");
    for (std::size_t i = 0; i < pilots_.size(); ++i)
      if (pilots_[i] >= cfg_.n_tokens || (i > 0 && pilots_[i] <= pilots_[i - 1]))
        throw ConfigError("estimation model: pilot indices must be increasing and < N_c");
    Initializer init(cfg_.init_seed);
    create_denoiser(params_, init, cfg_);
    create_linear(params_, init, "pe", cfg_.token_dim, cfg_.d_model);
    params_.add("mask_token", cfg_.mask_token_init == MaskTokenInit::zero
                                  ? init.zeros({cfg_.d_model}, cfg_.mask_token_trainable)
                                  : init.normal({cfg_.d_model}, 1.0, cfg_.mask_token_trainable));
    create_decoder(params_, init, cfg_, cfg_.n_tokens);
  }

  EstimationModel(ModelConfig cfg, std::vector<std::size_t> pilot_indices,
                  const std::map<std::string, Tensor>& stored)
      : EstimationModel(std::move(cfg), std::move(pilot_indices)) {
    if (stored.size() != params_.entries().size())
      throw FormatError("checkpoint parameter set does not match the model");
    for (auto& [name, t] : params_.entries()) {
      auto it = stored.find(name);
      if (it == stored.end()) throw FormatError("checkpoint lacks parameter " + name);
      if (it->second.shape() != t.shape())
        throw FormatError("checkpoint parameter " + name + " has the wrong shape");
      std::copy(it->second.values().begin(), it->second.values().end(), t.mutable_values().begin());
    }
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const std::vector<std::size_t>& pilot_indices() const { return pilots_; }

  Tensor denoise(const Tensor& pilot_tokens) const { return denoise_mixer(params_, cfg_, pilot_tokens); }

  // The denoiser stage alone, with the same gain normalization as forward().
  Tensor denoise_normalized(const Tensor& pilot_tokens) const {
    const double rms = pilot_rms(pilot_tokens);
    return scale(denoise(scale(pilot_tokens, 1.0 / rms)), rms);
  }

  // Denoised pilot tokens -> full-band tokens.
  Tensor recover(const Tensor& denoised) const {
    const Tensor embedded = apply_linear(params_, "pe", denoised);
    const Tensor y = insert_mask_tokens(embedded, pilots_, cfg_.n_tokens, params_.get("mask_token"));
    return decode(params_, cfg_, y, pilots_);
  }

  // `detach_denoiser` cuts the graph between the stages so the decoder phase
  // of progressive training leaves the denoiser untouched.
  //
  // The network runs on pilots scaled to unit RMS and the outputs are scaled
  // back, which makes the estimator equivariant to the channel gain.
  EstimationForward forward(const Tensor& pilot_tokens, bool detach_denoiser = false) const {
    const double rms = pilot_rms(pilot_tokens);
    EstimationForward out;
    const Tensor den = denoise(scale(pilot_tokens, 1.0 / rms));
    out.denoised = scale(den, rms);
    out.tokens = scale(recover(detach_denoiser ? stop_gradient(den) : den), rms);
    return out;
  }

 private:
  static double pilot_rms(const Tensor& pilot_tokens) {
    double ms = 0.0;
    for (double v : pilot_tokens.values()) ms += v * v;
    ms /= static_cast<double>(pilot_tokens.size());
    return ms > 0.0 ? std::sqrt(ms) : 1.0;
  }

  ModelConfig cfg_;
  std::vector<std::size_t> pilots_;
  ParamStore params_;
};

// Received pilots -> full channel estimate over all subcarriers.
inline channel::ChannelTensor estimate_pipeline(const channel::PilotObservation& obs,
                                                const EstimationModel& model) {
  if (obs.pilot_indices != model.pilot_indices())
    throw ValidationError("estimate: pilot pattern does not match the model");
  if (2 * obs.data.n_rx * obs.data.n_tx != model.config().token_dim)
    throw DimensionError("estimate: antenna counts do not match the model");
  const auto fwd = model.forward(tokenize(obs.data).tokens);
  return detokenize_channel(fwd.tokens, obs.data.n_rx, obs.data.n_tx);
}

}  // namespace flowmat::model
