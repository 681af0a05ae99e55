// Trains a small feedback model on synthetic eigenvectors, then sends one
// held-out sample through compress -> bits -> reconstruct.
#include <cstdio>

#include "flowmat/eval/experiment.hpp"

using namespace flowmat;

int main() {
  train::DataConfig dc;
  dc.geom.n_tx = 8;
  dc.geom.n_sub = 52;
  dc.geom.pilot_pattern = train::parse_pilot_pattern("all", dc.geom.n_sub);
  dc.n_samples = 200;
  const auto data = eval::split_dataset(train::generate_dataset(dc), dc.test_fraction);

  model::ModelConfig mc;
  mc.n_tokens = dc.geom.n_subband;
  mc.token_dim = 2 * dc.geom.n_tx;
  mc.d_model = 32;
  mc.keep = 4;
  mc = eval::with_budget(mc, 64, 2);  // d_q = 8

  model::FeedbackModel fb(mc);
  train::TrainConfig tc;
  tc.steps = 400;
  const auto rep = train::train_feedback(fb, data.train_set.eigens, data.test_set.eigens, tc);
  std::printf("trained %zu steps, final loss %.4f\n", rep.curve.size(), rep.curve.back().loss);

  const auto& w = data.test_set.eigens.front();
  const auto payload = fb.compress(w);
  const auto w_hat = fb.reconstruct(payload);
  std::printf("payload %u bits (%zu bytes), kept subbands:", payload.bit_length, payload.bytes.size());
  for (auto k : fb.kept_indices()) std::printf(" %zu", k);
  std::printf("\nrho on this sample %.4f, held-out mean %.4f, truncation %.4f\n", eval::rho(w, w_hat),
              rep.metrics.at("rho"), eval::truncation_rho(data.test_set.eigens, 64));
}
