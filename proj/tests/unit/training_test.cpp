#include <gtest/gtest.h>

#include "flowmat/eval/metrics.hpp"
#include "flowmat/model/checkpoint.hpp"
#include "flowmat/training/precoder_layer.hpp"
#include "flowmat/training/trainer.hpp"

using namespace flowmat;
using namespace flowmat::train;

namespace {

Dataset tiny_dataset(std::size_t n = 12, std::uint64_t seed = 3) {
  KeyValues kv;
  kv.set("geom.n_tx", "4");
  kv.set("geom.n_rx", "2");
  kv.set("geom.n_sub", "16");
  kv.set("geom.n_subband", "4");
  kv.set("geom.subcarrier_spacing", "120000");
  kv.set("geom.pilots", "comb:4");
  kv.set_uint("data.n_samples", n);
  kv.set_uint("seed", seed);
  return generate_dataset(DataConfig::from_key_values(kv));
}

model::ModelConfig tiny_feedback() {
  model::ModelConfig c;
  c.n_tokens = 4;
  c.token_dim = 8;
  c.d_model = 16;
  c.n_heads = 2;
  c.encoder_depth = 2;
  c.decoder_depth = 2;
  c.keep = 2;
  c.d_q = 4;
  c.quant = model::QuantScheme::uniform;
  c.uniform.bits = 2;
  return c;
}

model::ModelConfig tiny_estimation() {
  model::ModelConfig c;
  c.n_tokens = 16;
  c.token_dim = 16;
  c.d_model = 16;
  c.n_heads = 2;
  c.decoder_depth = 2;
  c.quant = model::QuantScheme::none;
  return c;
}

TrainConfig short_run(std::size_t steps = 20) {
  TrainConfig tc;
  tc.steps = steps;
  tc.steps_phase2 = steps;
  tc.steps_e2e = 5;
  tc.batch = 4;
  tc.seed = 9;
  return tc;
}

}  // namespace

TEST(Schedule, CosineDecayEndpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(1e-3, 0, 100), 1e-3);
  EXPECT_NEAR(cosine_lr(1e-3, 50, 100), 5e-4, 1e-15);
  EXPECT_NEAR(cosine_lr(1e-3, 100, 100), 0.0, 1e-18);
  EXPECT_DOUBLE_EQ(cosine_lr(1e-3, 0, 1), 1e-3);
}

TEST(Schedule, GradientClipScalesToTheGlobalNorm) {
  Tensor a({2}, {1.0, 1.0}, true), b({1}, {1.0}, true);
  sum(scale(a, 3.0)).backward();
  sum(scale(b, 4.0)).backward();
  std::vector<Tensor> ps{a, b};
  clip_gradients(ps, 1.0);
  const double n = std::sqrt(a.grad()[0] * a.grad()[0] + a.grad()[1] * a.grad()[1] + b.grad()[0] * b.grad()[0]);
  EXPECT_NEAR(n, 1.0, 1e-12);
  EXPECT_NEAR(a.grad()[0] / b.grad()[0], 0.75, 1e-12);
}

TEST(Batcher, EveryEpochVisitsEachSampleOnce) {
  Batcher b(7, 1);
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7; ++i) ++seen[b.next(1)[0]];
  for (int s : seen) EXPECT_EQ(s, 1);
  EXPECT_THROW(Batcher(0, 1), ValidationError);
}

TEST(Divergence, GuardTripsOnNonFiniteAndSustainedBlowUp) {
  DivergenceGuard g(10.0, 3);
  g.observe("p", 0, 1.0);
  g.observe("p", 1, 50.0);
  g.observe("p", 2, 50.0);
  g.observe("p", 3, 2.0);  // resets the run
  g.observe("p", 4, 50.0);
  g.observe("p", 5, 50.0);
  EXPECT_THROW(g.observe("p", 6, 50.0), DivergenceError);
  DivergenceGuard h(10.0, 3);
  EXPECT_THROW(h.observe("p", 0, std::numeric_limits<double>::quiet_NaN()), DivergenceError);
}

TEST(Divergence, RunPhaseAbortsWhenTheLossRuns) {
  Tensor x({1}, {1.0}, true);
  TrainConfig tc = short_run();
  tc.divergence_window = 5;
  TrainReport rep;
  EXPECT_THROW(run_phase("blowup", 50, {x}, {},
                         [&](std::size_t step) { return add_scalar(scale(sum(x), 0.0), 1.0 + 100.0 * step); },
                         tc, rep),
               DivergenceError);
  EXPECT_EQ(rep.curve.size(), 6u);
}

TEST(Config, RejectsBadTrainSettings) {
  KeyValues kv;
  kv.set("train.lr", "0");
  EXPECT_THROW(TrainConfig::from_key_values(kv), ConfigError);
  KeyValues kv2;
  kv2.set("train.regime", "sideways");
  EXPECT_THROW(TrainConfig::from_key_values(kv2), ConfigError);
  KeyValues kv3;
  kv3.set("train.snr_min", "30");
  EXPECT_THROW(TrainConfig::from_key_values(kv3), ConfigError);
  TrainConfig tc;
  KeyValues out;
  tc.to_key_values(out);
  const auto back = TrainConfig::from_key_values(out);
  KeyValues again;
  back.to_key_values(again);
  EXPECT_EQ(out.to_text(), again.to_text());
}

TEST(Losses, CanonicalAndLiteralNormalizers) {
  const Tensor target({1, 2}, {3.0, 4.0});
  const Tensor pred({1, 2}, {0.0, 0.0});
  EXPECT_DOUBLE_EQ(loss_ce(pred, target, LossMode::canonical).item(), 1.0);
  EXPECT_THROW(loss_ce(pred, target, LossMode::paper_literal), ValidationError);
  const Tensor p2({1, 2}, {6.0, 8.0});
  EXPECT_DOUBLE_EQ(loss_ce(p2, target, LossMode::canonical).item(), 1.0);
  EXPECT_DOUBLE_EQ(loss_ce(p2, target, LossMode::paper_literal).item(), 0.5);
  EXPECT_THROW(loss_ce(Tensor::zeros({1, 3}), target, LossMode::canonical), DimensionError);
}

TEST(Losses, FeedbackLossIsOneMinusRho) {
  // Row 0: [1, j] vs j [1, j]  (same up to phase). Row 1: [1, 0] vs [0, 1].
  const Tensor truth({2, 4}, {1, 0, 0, 1, 1, 0, 0, 0});
  const Tensor pred({2, 4}, {0, -1, 1, 0, 0, 1, 0, 0});
  const auto rc = row_cosine(truth, pred);
  EXPECT_NEAR(rc[0], 1.0, 1e-15);
  EXPECT_NEAR(rc[1], 0.0, 1e-15);
  EXPECT_NEAR(loss_cf(truth, pred).item(), 0.5, 1e-15);
  EXPECT_THROW(row_cosine(truth, Tensor::zeros({2, 4})), ValidationError);
}

TEST(PrecoderLayer, ForwardEqualsTheExactPrecoders) {
  const auto d = tiny_dataset(3);
  for (const auto& h : d.channels) {
    const Tensor w = differentiable_precoders(model::tokenize(h).tokens, h.n_rx, h.n_tx, d.geom.n_subband);
    const auto exact = channel::compute_precoders(h, d.geom);
    EXPECT_NEAR(eval::rho(exact, model::detokenize_eigen(w, h.n_tx)), 1.0, 1e-9);
  }
  EXPECT_THROW(differentiable_precoders(Tensor::zeros({15, 16}), 2, 4, 4), DimensionError);
}

TEST(Feedback, TrainingIsDeterministic) {
  const auto d = tiny_dataset();
  const auto train = std::vector<channel::EigenMatrix>(d.eigens.begin(), d.eigens.begin() + 10);
  const auto test = std::vector<channel::EigenMatrix>(d.eigens.begin() + 10, d.eigens.end());
  model::FeedbackModel a(tiny_feedback()), b(tiny_feedback());
  const auto ra = train_feedback(a, train, test, short_run());
  const auto rb = train_feedback(b, train, test, short_run());
  EXPECT_EQ(ra.curve_csv(), rb.curve_csv());
  EXPECT_EQ(ra.summary(), rb.summary());
  EXPECT_EQ(model::encode_checkpoint(model::make_checkpoint(a)), model::encode_checkpoint(model::make_checkpoint(b)));
  ASSERT_TRUE(ra.metrics.count("rho"));
  EXPECT_GT(ra.metrics.at("rho"), 0.0);
  EXPECT_LE(ra.metrics.at("rho"), 1.0);
  EXPECT_EQ(ra.curve.back().phase, "feedback_quant");
}

TEST(Feedback, LossDropsOnATinyOverfit) {
  const auto d = tiny_dataset(8);
  model::FeedbackModel fb(tiny_feedback());
  auto tc = short_run(300);
  tc.quant_finetune_fraction = 0.0;
  const auto rep = train_feedback(fb, d.eigens, d.eigens, tc);
  EXPECT_LT(rep.curve.back().loss, 0.5 * rep.curve.front().loss);
}

TEST(Feedback, VqCodebookIsSeededFromLatents) {
  const auto d = tiny_dataset(8);
  auto c = tiny_feedback();
  c.quant = model::QuantScheme::vq;
  c.vq_size = 8;
  model::FeedbackModel fb(c);
  const auto rep = train_feedback(fb, d.eigens, d.eigens, short_run(10));
  EXPECT_TRUE(rep.metrics.count("rho"));
  EXPECT_EQ(model::feedback_pipeline(d.eigens[0], fb).payload->bit_length, 2u * 3u);
}

// Progressive training: the decoder phase must not move the denoiser, so its
// weights depend only on the first phase.
TEST(Estimation, DecoderPhaseFreezesTheDenoiser) {
  const auto d = tiny_dataset();
  auto run = [&](std::size_t phase2_steps) {
    model::EstimationModel est(tiny_estimation(), d.geom.pilot_pattern.pilot_indices);
    auto tc = short_run(10);
    tc.steps_phase2 = phase2_steps;
    train_estimation(est, d.slice(0, 10), d.slice(10, 12), tc);
    return model::snapshot_params(est.params());
  };
  const auto short_p2 = run(1), long_p2 = run(15);
  bool decoder_moved = false;
  for (const auto& [name, t] : short_p2) {
    if (name.rfind("den.", 0) == 0)
      EXPECT_EQ(t.vec(), long_p2.at(name).vec()) << name;
    else if (t.vec() != long_p2.at(name).vec())
      decoder_moved = true;
  }
  EXPECT_TRUE(decoder_moved);
}

TEST(Estimation, JointRegimeTrainsEverythingAndReportsMetrics) {
  const auto d = tiny_dataset();
  model::EstimationModel est(tiny_estimation(), d.geom.pilot_pattern.pilot_indices);
  const auto before = model::snapshot_params(est.params());
  auto tc = short_run(5);
  tc.regime = Regime::joint;
  const auto rep = train_estimation(est, d.slice(0, 10), d.slice(10, 12), tc);
  EXPECT_NE(before.at("den.in.w").vec(), est.params().get("den.in.w").vec());
  EXPECT_NE(before.at("dec.in.w").vec(), est.params().get("dec.in.w").vec());
  for (const char* k : {"nmse_db", "ls_nmse_db", "pilot_nmse_db", "ls_pilot_nmse_db"})
    EXPECT_TRUE(rep.metrics.count(k)) << k;
  EXPECT_EQ(rep.curve.size(), 5u);
}

TEST(Estimation, PhaseRotationKeepsPowerAndPrecoders) {
  const auto d = tiny_dataset(2);
  const auto r = rotate_phase(d.channels[0], 1.3);
  EXPECT_NEAR(eval::rho(channel::compute_precoders(r, d.geom), d.eigens[0]), 1.0, 1e-12);
  EXPECT_NEAR(eval::nmse_db(rotate_phase(r, -1.3), d.channels[0]), eval::kNmseFloorDb, 1e-9);
}

TEST(Joint, EndToEndRunsAndReportsComposedRho) {
  const auto d = tiny_dataset();
  model::EstimationModel est(tiny_estimation(), d.geom.pilot_pattern.pilot_indices);
  model::FeedbackModel fb(tiny_feedback());
  const auto rep = train_end_to_end(est, fb, d.slice(0, 10), d.slice(10, 12), short_run(5));
  EXPECT_TRUE(rep.metrics.count("rho_composed"));
  EXPECT_EQ(rep.curve.back().phase, "end_to_end");
  EXPECT_EQ(rep.curve.back().step + 1, rep.curve.size());
}
