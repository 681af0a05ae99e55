/**
 * @file trainer.hpp
 * @brief Training regimes for the estimation and feedback models.
 *
 *   progressive  denoiser on the pilot loss, then the frozen denoiser feeds
 *                the decoder trained on the full-band loss
 *   joint        both estimation losses summed, all parameters at once
 *   splited      estimation (progressive) and feedback trained apart,
 *                evaluated composed
 *   end_to_end   the splited pretraining followed by fine-tuning of pilots ->
 *                estimate -> precoders -> feedback on 1 - Rho
 *
 * Feedback training with a quantizer runs unquantized first, fixes the
 * quantizer from the trained latents (uniform range or VQ codebook seeding),
 * then fine-tunes with the straight-through quantizer.
 */
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flowmat/eval/metrics.hpp"
#include "flowmat/model/estimation.hpp"
#include "flowmat/model/feedback.hpp"
#include "flowmat/numerics/adam.hpp"
#include "flowmat/training/data.hpp"
#include "flowmat/training/losses.hpp"
#include "flowmat/training/precoder_layer.hpp"

namespace flowmat::train {

enum class Regime { progressive, joint, end_to_end, splited };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::progressive: return "progressive";
    case Regime::joint: return "joint";
    case Regime::end_to_end: return "end_to_end";
    case Regime::splited: return "splited";
  }
  return "?";
}
inline Regime parse_regime(const std::string& s) {
  if (s == "progressive") return Regime::progressive;
  if (s == "joint") return Regime::joint;
  if (s == "end_to_end") return Regime::end_to_end;
  if (s == "splited") return Regime::splited;
  throw ConfigError("unknown training regime: " + s);
}

struct TrainConfig {
  Regime regime = Regime::progressive;
  std::size_t steps = 2000;         // main phase (feedback, denoiser, joint)
  std::size_t steps_phase2 = 2000;  // decoder phase of progressive training
  std::size_t steps_e2e = 500;      // end-to-end fine-tuning
  std::size_t batch = 16;
  double lr = 1e-3;                 // cosine-decayed to zero over each phase
  double grad_clip = 1.0;           // global-norm clip, <= 0 disables
  std::uint64_t seed = 1;
  double snr_min = 0.0;             // per-sample training SNR drawn in [min, max] dB
  double snr_max = 20.0;
  double eval_snr = 10.0;
  LossMode loss_mode = LossMode::canonical;
  double quant_finetune_fraction = 0.3;
  double calib_margin = 0.05;
  double divergence_factor = 10.0;
  std::size_t divergence_window = 100;
  bool phase_augment = true;  // random global phase per estimation sample

  void validate() const {
    if (steps == 0 || batch == 0) throw ConfigError("train: steps and batch must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (snr_min > snr_max) throw ConfigError("train: snr_min exceeds snr_max");
    if (!(quant_finetune_fraction >= 0.0 && quant_finetune_fraction < 1.0))
      throw ConfigError("train: quant_finetune_fraction must lie in [0, 1)");
    if (!(calib_margin >= 0.0)) throw ConfigError("train: calib_margin must be >= 0");
    if (divergence_window == 0 || !(divergence_factor > 1.0))
      throw ConfigError("train: divergence guard needs window >= 1 and factor > 1");
  }

  static TrainConfig from_key_values(const KeyValues& kv) {
    TrainConfig c;
    c.regime = parse_regime(kv.get_string("train.regime", to_string(c.regime)));
    c.steps = kv.get_uint("train.steps", c.steps);
    c.steps_phase2 = kv.get_uint("train.steps_phase2", c.steps_phase2);
    c.steps_e2e = kv.get_uint("train.steps_e2e", c.steps_e2e);
    c.batch = kv.get_uint("train.batch", c.batch);
    c.lr = kv.get_double("train.lr", c.lr);
    c.grad_clip = kv.get_double("train.grad_clip", c.grad_clip);
    c.seed = kv.get_uint("seed", c.seed);
    c.snr_min = kv.get_double("train.snr_min", c.snr_min);
    c.snr_max = kv.get_double("train.snr_max", c.snr_max);
    c.eval_snr = kv.get_double("train.eval_snr", c.eval_snr);
    c.loss_mode = parse_loss_mode(kv.get_string("train.loss_mode", to_string(c.loss_mode)));
    c.quant_finetune_fraction =
        kv.get_double("train.quant_finetune_fraction", c.quant_finetune_fraction);
    c.calib_margin = kv.get_double("train.calib_margin", c.calib_margin);
    c.divergence_factor = kv.get_double("train.divergence_factor", c.divergence_factor);
    c.divergence_window = kv.get_uint("train.divergence_window", c.divergence_window);
    c.phase_augment = kv.get_bool("train.phase_augment", c.phase_augment);
    c.validate();
    return c;
  }

  void to_key_values(KeyValues& kv) const {
    kv.set("train.regime", to_string(regime));
    kv.set_uint("train.steps", steps);
    kv.set_uint("train.steps_phase2", steps_phase2);
    kv.set_uint("train.steps_e2e", steps_e2e);
    kv.set_uint("train.batch", batch);
    kv.set_double("train.lr", lr);
    kv.set_double("train.grad_clip", grad_clip);
    kv.set_uint("seed", seed);
    kv.set_double("train.snr_min", snr_min);
    kv.set_double("train.snr_max", snr_max);
    kv.set_double("train.eval_snr", eval_snr);
    kv.set("train.loss_mode", to_string(loss_mode));
    kv.set_double("train.quant_finetune_fraction", quant_finetune_fraction);
    kv.set_double("train.calib_margin", calib_margin);
    kv.set_double("train.divergence_factor", divergence_factor);
    kv.set_uint("train.divergence_window", divergence_window);
    kv.set_bool("train.phase_augment", phase_augment);
  }
};

struct CurvePoint {
  std::size_t step = 0;  // global, across phases
  std::string phase;
  double loss = 0.0;
};

struct TrainReport {
  std::vector<CurvePoint> curve;
  std::map<std::string, double> metrics;  // held-out
  double wall_seconds = 0.0;              // not part of the deterministic outputs
  KeyValues config;
  std::uint64_t seed = 0;

  std::string curve_csv() const {
    std::string out = "step,phase,loss\n";
    for (const auto& p : curve)
      out += std::to_string(p.step) + "," + p.phase + "," + KeyValues::format_double(p.loss) + "\n";
    return out;
  }

  std::string summary() const {
    std::string out = "seed = " + std::to_string(seed) + "\n";
    out += "steps = " + std::to_string(curve.size()) + "\n";
    for (const auto& [k, v] : metrics) out += "metric." + k + " = " + KeyValues::format_double(v) + "\n";
    out += "# config\n" + config.to_text();
    return out;
  }

  void append(const TrainReport& other) {
    for (auto p : other.curve) {
      p.step = curve.size();
      curve.push_back(p);
    }
    for (const auto& [k, v] : other.metrics) metrics[k] = v;
  }
};

// Epoch-shuffled minibatches over [0, n).
class Batcher {
 public:
  Batcher(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    if (n == 0) throw ValidationError("training set is empty");
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
  }
  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
      if (pos_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

inline double cosine_lr(double base, std::size_t step, std::size_t total) {
  if (total <= 1) return base;
  const double t = static_cast<double>(step) / static_cast<double>(total);
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * t));
}

inline void clip_gradients(std::vector<Tensor>& params, double max_norm) {
  if (!(max_norm > 0.0)) return;
  double total = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) total += g * g;
  total = std::sqrt(total);
  if (total <= max_norm) return;
  const double s = max_norm / total;
  for (auto& p : params)
    if (p.has_grad()) {
      // Rescale in place through the node's gradient buffer.
      for (auto& g : p.node()->grad) g *= s;
    }
}

// Aborts when the loss is non-finite or stays above factor x its first value
// for `window` consecutive steps.
class DivergenceGuard {
 public:
  DivergenceGuard(double factor, std::size_t window) : factor_(factor), window_(window) {}
  void observe(const std::string& phase, std::size_t step, double loss) {
    if (!std::isfinite(loss))
      throw DivergenceError(phase + ": non-finite loss at step " + std::to_string(step));
    if (!initial_) initial_ = loss;
    if (loss > factor_ * *initial_) {
      if (++over_ >= window_)
        throw DivergenceError(phase + ": loss above " + KeyValues::format_double(factor_) +
                              "x its initial value for " + std::to_string(window_) + " steps");
    } else {
      over_ = 0;
    }
  }

 private:
  double factor_;
  std::size_t window_;
  std::optional<double> initial_;
  std::size_t over_ = 0;
};

// One optimization phase: Adam on `params` with cosine decay, gradient
// clipping and the divergence guard. `loss_at` builds the step's graph.
// Gradients of every tensor in `zero_after` are cleared after each step.
inline void run_phase(const std::string& phase, std::size_t steps, std::vector<Tensor> params,
                      const std::vector<model::ParamStore*>& zero_after,
                      const std::function<Tensor(std::size_t)>& loss_at, const TrainConfig& cfg,
                      TrainReport& report) {
  AdamState state;
  DivergenceGuard guard(cfg.divergence_factor, cfg.divergence_window);
  for (std::size_t step = 0; step < steps; ++step) {
    const Tensor loss = loss_at(step);
    const double value = loss.item();
    report.curve.push_back({report.curve.size(), phase, value});
    guard.observe(phase, step, value);
    loss.backward();
    clip_gradients(params, cfg.grad_clip);
    adam_step(params, state, cosine_lr(cfg.lr, step, steps));
    for (auto* ps : zero_after) ps->zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Feedback

inline std::vector<Tensor> eigen_tokens(const model::FeedbackModel& fb,
                                        const std::vector<channel::EigenMatrix>& ws) {
  std::vector<Tensor> out;
  out.reserve(ws.size());
  for (const auto& w : ws) out.push_back(fb.input_tokens(w));
  return out;
}

// Uniform range from the latents of every training sample, or VQ codewords
// seeded from a deterministic shuffle of those latents.
inline void fit_quantizer(model::FeedbackModel& fb, const std::vector<Tensor>& tokens,
                          const TrainConfig& cfg) {
  auto& mc = fb.mutable_config();
  if (mc.quant == model::QuantScheme::none) return;
  std::vector<double> flat;
  for (const auto& t : tokens) {
    const auto latent = fb.encode_latent(t).first;
    flat.insert(flat.end(), latent.values().begin(), latent.values().end());
  }
  if (mc.quant == model::QuantScheme::uniform) {
    mc.uniform = quant::calibrate_range(flat, mc.uniform.bits, cfg.calib_margin);
    return;
  }
  const std::size_t dq = mc.d_q, n = flat.size() / dq;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(cfg.seed, kStreamCodebook));
  std::shuffle(order.begin(), order.end(), rng);
  double var = 0.0;
  for (double v : flat) var += v * v;
  const double jitter = 0.01 * std::sqrt(var / static_cast<double>(flat.size()));
  std::normal_distribution<double> gauss(0.0, jitter);
  auto cb = fb.params().get("vq.codebook").mutable_values();
  for (std::size_t j = 0; j < mc.vq_size; ++j) {
    const std::size_t src = order[j % n];
    for (std::size_t c = 0; c < dq; ++c)
      cb[j * dq + c] = flat[src * dq + c] + (j >= n ? gauss(rng) : 0.0);
  }
}

inline void feedback_metrics(const model::FeedbackModel& fb,
                             const std::vector<channel::EigenMatrix>& test, TrainReport& report) {
  if (test.empty()) return;
  std::vector<channel::EigenMatrix> rec, rec_float;
  for (const auto& w : test) {
    rec.push_back(model::feedback_pipeline(w, fb).reconstructed);
    rec_float.push_back(fb.reconstruct_float(w));
  }
  report.metrics["rho"] = eval::rho(test, rec);
  report.metrics["rho_float"] = eval::rho(test, rec_float);
}

inline TrainReport train_feedback(model::FeedbackModel& fb,
                                  const std::vector<channel::EigenMatrix>& train_set,
                                  const std::vector<channel::EigenMatrix>& test_set,
                                  const TrainConfig& cfg) {
  cfg.validate();
  TrainReport report;
  report.seed = cfg.seed;
  const auto tokens = eigen_tokens(fb, train_set);
  const bool quantized = fb.config().quant != model::QuantScheme::none;
  const std::size_t n_quant =
      quantized ? static_cast<std::size_t>(std::llround(cfg.quant_finetune_fraction *
                                                         static_cast<double>(cfg.steps)))
                : 0;
  Batcher batcher(tokens.size(), derive_seed(cfg.seed, kStreamBatch, 0));

  auto loss_fn = [&](bool quantize) {
    return [&, quantize](std::size_t) {
      std::vector<Tensor> truth, pred;
      Tensor extra;
      for (auto i : batcher.next(cfg.batch)) {
        auto out = fb.forward(tokens[i], quantize);
        truth.push_back(tokens[i]);
        pred.push_back(out.tokens);
        if (out.vq) {
          const Tensor v = add(out.vq->codebook, out.vq->commitment);
          extra = extra.defined() ? add(extra, v) : v;
        }
      }
      Tensor loss = loss_cf(concat_rows(truth), concat_rows(pred));
      if (extra.defined()) loss = add(loss, scale(extra, 1.0 / static_cast<double>(cfg.batch)));
      return loss;
    };
  };

  run_phase("feedback", cfg.steps - n_quant, fb.params().trainable(), {&fb.params()},
            loss_fn(false), cfg, report);
  if (n_quant > 0) {
    fit_quantizer(fb, tokens, cfg);
    run_phase("feedback_quant", n_quant, fb.params().trainable(), {&fb.params()}, loss_fn(true),
              cfg, report);
  }
  feedback_metrics(fb, test_set, report);
  return report;
}

// ---------------------------------------------------------------------------
// Estimation

struct EstimationSample {
  Tensor noisy;  // received pilot tokens [N_p x d_tok]
  Tensor clean;  // noiseless pilot tokens
  Tensor full;   // full-band tokens [N_c x d_tok]
  channel::PilotObservation obs;
};

inline EstimationSample make_estimation_sample(const channel::ChannelTensor& h,
                                               const channel::SystemGeometry& geom, double snr_db,
                                               std::uint64_t noise_seed) {
  EstimationSample s;
  s.obs = channel::observe_pilots(h, geom, snr_db, noise_seed);
  s.noisy = model::tokenize(s.obs.data).tokens;
  s.clean = model::tokenize(channel::restrict_to_pilots(h, geom.pilot_pattern.pilot_indices).values).tokens;
  s.full = model::tokenize(h).tokens;
  return s;
}

// The channel times a global phase e^{j phi}; precoders and NMSE are
// invariant to it, so it is free augmentation for the estimator.
inline channel::ChannelTensor rotate_phase(channel::ChannelTensor h, double phi) {
  const auto r = std::polar(1.0, phi);
  for (auto& z : h.data) z *= r;
  return h;
}

// Draws a fresh noisy batch; noise seeds are a function of (seed, phase, step).
class EstimationBatches {
 public:
  EstimationBatches(const Dataset& data, const TrainConfig& cfg, std::uint64_t phase_id)
      : data_(data), cfg_(cfg), phase_(phase_id),
        batcher_(data.size(), derive_seed(cfg.seed, kStreamBatch, 100 + phase_id)),
        snr_rng_(derive_seed(cfg.seed, kStreamNoise, 1000 + phase_id)) {}

  std::vector<EstimationSample> next(std::size_t step) {
    std::vector<EstimationSample> out;
    std::uniform_real_distribution<double> snr(cfg_.snr_min, cfg_.snr_max);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::size_t b = 0;
    for (auto i : batcher_.next(cfg_.batch)) {
      const double s = cfg_.snr_min == cfg_.snr_max ? cfg_.snr_min : snr(snr_rng_);
      const auto seed = derive_seed(cfg_.seed, kStreamNoise, (phase_ << 40) ^ (step * cfg_.batch + b++));
      if (cfg_.phase_augment) {
        const double phi = phase(snr_rng_);
        out.push_back(make_estimation_sample(rotate_phase(data_.channels[i], phi), data_.geom, s, seed));
      } else {
        out.push_back(make_estimation_sample(data_.channels[i], data_.geom, s, seed));
      }
    }
    return out;
  }

 private:
  const Dataset& data_;
  const TrainConfig& cfg_;
  std::uint64_t phase_;
  Batcher batcher_;
  std::mt19937_64 snr_rng_;
};

// Held-out NMSE of the model and of LS + linear interpolation at one SNR.
struct EstimationScore {
  double model_nmse_db = 0.0;
  double ls_nmse_db = 0.0;
  double pilot_nmse_db = 0.0;     // denoised pilots
  double ls_pilot_nmse_db = 0.0;  // raw pilots
};

inline EstimationScore score_estimation(const model::EstimationModel& est, const Dataset& test,
                                        double snr_db, std::uint64_t seed) {
  eval::NmseAccumulator model_acc, ls_acc, pilot_acc, ls_pilot_acc;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& h = test.channels[i];
    const auto s = make_estimation_sample(h, test.geom, snr_db, derive_seed(seed, kStreamEvalNoise, i));
    const auto fwd = est.forward(s.noisy);
    model_acc.add(model::detokenize_channel(fwd.tokens, h.n_rx, h.n_tx), h);
    const auto ls = channel::ls_estimate(s.obs);
    ls_acc.add(channel::interpolate_frequency(ls, h.n_sub), h);
    const auto clean = channel::restrict_to_pilots(h, s.obs.pilot_indices).values;
    pilot_acc.add(model::detokenize_channel(fwd.denoised, h.n_rx, h.n_tx), clean);
    ls_pilot_acc.add(ls.values, clean);
  }
  return {model_acc.db(), ls_acc.db(), pilot_acc.db(), ls_pilot_acc.db()};
}

inline void estimation_metrics(const model::EstimationModel& est, const Dataset& test,
                               const TrainConfig& cfg, TrainReport& report) {
  if (test.size() == 0) return;
  const auto sc = score_estimation(est, test, cfg.eval_snr, cfg.seed);
  report.metrics["nmse_db"] = sc.model_nmse_db;
  report.metrics["ls_nmse_db"] = sc.ls_nmse_db;
  report.metrics["pilot_nmse_db"] = sc.pilot_nmse_db;
  report.metrics["ls_pilot_nmse_db"] = sc.ls_pilot_nmse_db;
}

inline std::vector<Tensor> concat_field(const std::vector<EstimationSample>& batch,
                                        Tensor EstimationSample::*field) {
  std::vector<Tensor> out;
  for (const auto& s : batch) out.push_back(s.*field);
  return out;
}

// Progressive or joint estimation training.
inline TrainReport train_estimation(model::EstimationModel& est, const Dataset& train_set,
                                    const Dataset& test_set, const TrainConfig& cfg) {
  cfg.validate();
  TrainReport report;
  report.seed = cfg.seed;
  auto& ps = est.params();
  if (cfg.regime == Regime::joint) {
    EstimationBatches batches(train_set, cfg, 0);
    run_phase("joint", cfg.steps, ps.trainable(), {&ps},
              [&](std::size_t step) {
                const auto batch = batches.next(step);
                std::vector<Tensor> den, full;
                for (const auto& s : batch) {
                  const auto f = est.forward(s.noisy);
                  den.push_back(f.denoised);
                  full.push_back(f.tokens);
                }
                return add(loss_ce1(concat_rows(den), concat_rows(concat_field(batch, &EstimationSample::clean)),
                                    cfg.loss_mode),
                           loss_ce2(concat_rows(full), concat_rows(concat_field(batch, &EstimationSample::full)),
                                    cfg.loss_mode));
              },
              cfg, report);
  } else {
    EstimationBatches phase1(train_set, cfg, 1);
    run_phase("denoise", cfg.steps, ps.trainable({"den."}), {&ps},
              [&](std::size_t step) {
                const auto batch = phase1.next(step);
                std::vector<Tensor> den;
                for (const auto& s : batch) den.push_back(est.denoise_normalized(s.noisy));
                return loss_ce1(concat_rows(den), concat_rows(concat_field(batch, &EstimationSample::clean)),
                                cfg.loss_mode);
              },
              cfg, report);
    EstimationBatches phase2(train_set, cfg, 2);
    run_phase("decode", cfg.steps_phase2, ps.trainable({"pe.", "mask_token", "dec."}), {&ps},
              [&](std::size_t step) {
                const auto batch = phase2.next(step);
                std::vector<Tensor> full;
                for (const auto& s : batch) full.push_back(est.forward(s.noisy, true).tokens);
                return loss_ce2(concat_rows(full), concat_rows(concat_field(batch, &EstimationSample::full)),
                                cfg.loss_mode);
              },
              cfg, report);
  }
  estimation_metrics(est, test_set, cfg, report);
  return report;
}

// ---------------------------------------------------------------------------
// Composed estimation + feedback

// Pilots -> estimate -> exact precoders -> feedback. No gradient coupling.
inline std::vector<channel::EigenMatrix> composed_feedback(const model::EstimationModel& est,
                                                           const model::FeedbackModel& fb,
                                                           const Dataset& test, double snr_db,
                                                           std::uint64_t seed) {
  std::vector<channel::EigenMatrix> out;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto obs = channel::observe_pilots(test.channels[i], test.geom, snr_db,
                                             derive_seed(seed, kStreamEvalNoise, i));
    const auto h_hat = model::estimate_pipeline(obs, est);
    const auto w_hat = channel::compute_precoders(h_hat, test.geom);
    out.push_back(model::feedback_pipeline(w_hat, fb).reconstructed);
  }
  return out;
}

inline void composed_metrics(const model::EstimationModel& est, const model::FeedbackModel& fb,
                             const Dataset& test, const TrainConfig& cfg, TrainReport& report) {
  if (test.size() == 0) return;
  report.metrics["rho_composed"] =
      eval::rho(test.eigens, composed_feedback(est, fb, test, cfg.eval_snr, cfg.seed));
}

// Estimation and feedback trained independently on their own targets.
inline TrainReport train_splited(model::EstimationModel& est, model::FeedbackModel& fb,
                                 const Dataset& train_set, const Dataset& test_set,
                                 const TrainConfig& cfg) {
  TrainConfig est_cfg = cfg;
  est_cfg.regime = Regime::progressive;
  TrainReport report = train_estimation(est, train_set, test_set, est_cfg);
  report.append(train_feedback(fb, train_set.eigens, test_set.eigens, cfg));
  report.seed = cfg.seed;
  composed_metrics(est, fb, test_set, cfg, report);
  return report;
}

// Splited pretraining, then 1 - Rho through estimation, a differentiable
// precoder layer and the feedback model.
inline TrainReport train_end_to_end(model::EstimationModel& est, model::FeedbackModel& fb,
                                    const Dataset& train_set, const Dataset& test_set,
                                    const TrainConfig& cfg) {
  TrainReport report = train_splited(est, fb, train_set, test_set, cfg);
  if (cfg.steps_e2e == 0) return report;
  const bool quantize = fb.config().quant != model::QuantScheme::none;
  const auto& geom = train_set.geom;
  const auto truth_tokens = eigen_tokens(fb, train_set.eigens);
  Batcher batcher(train_set.size(), derive_seed(cfg.seed, kStreamBatch, 3));
  std::mt19937_64 snr_rng(derive_seed(cfg.seed, kStreamNoise, 3000));
  std::uniform_real_distribution<double> snr(cfg.snr_min, cfg.snr_max);
  std::vector<Tensor> params = est.params().trainable();
  for (auto& p : fb.params().trainable()) params.push_back(p);
  run_phase("end_to_end", cfg.steps_e2e, params, {&est.params(), &fb.params()},
            [&](std::size_t step) {
              std::vector<Tensor> truth, pred, extra;
              std::size_t b = 0;
              for (auto i : batcher.next(cfg.batch)) {
                const double s = cfg.snr_min == cfg.snr_max ? cfg.snr_min : snr(snr_rng);
                const auto obs = channel::observe_pilots(
                    train_set.channels[i], geom, s,
                    derive_seed(cfg.seed, kStreamNoise, (std::uint64_t{3} << 40) ^ (step * cfg.batch + b++)));
                const auto est_tokens = est.forward(model::tokenize(obs.data).tokens).tokens;
                const Tensor w = differentiable_precoders(est_tokens, geom.n_rx, geom.n_tx, geom.n_subband, 10,
                                                         fb.config().align_phase);
                auto out = fb.forward(w, quantize);
                truth.push_back(truth_tokens[i]);
                pred.push_back(out.tokens);
                if (out.vq) extra.push_back(add(out.vq->codebook, out.vq->commitment));
              }
              Tensor loss = loss_cf(concat_rows(truth), concat_rows(pred));
              for (const auto& e : extra) loss = add(loss, scale(e, 1.0 / static_cast<double>(cfg.batch)));
              return loss;
            },
            cfg, report);
  estimation_metrics(est, test_set, cfg, report);
  feedback_metrics(fb, test_set.eigens, report);
  composed_metrics(est, fb, test_set, cfg, report);
  return report;
}

}  // namespace flowmat::train
