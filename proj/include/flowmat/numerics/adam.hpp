#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "flowmat/numerics/tensor.hpp"

namespace flowmat {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments for one parameter tensor.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<AdamMoments> moments;  // one entry per parameter, same order
};

// One bias-corrected Adam update of `param` in place. `t` is the 1-based step.
inline void adam_update(std::span<double> param, std::span<const double> grad,
                        AdamMoments& mom, std::size_t t, const AdamConfig& cfg,
                        double lr) {
  if (param.size() != grad.size()) throw DimensionError("adam: gradient size mismatch");
  if (mom.m.empty()) {
    mom.m.assign(param.size(), 0.0);
    mom.v.assign(param.size(), 0.0);
  }
  if (mom.m.size() != param.size()) throw DimensionError("adam: moment size mismatch");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * grad[i];
    mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = mom.m[i] / bc1;
    const double vhat = mom.v[i] / bc2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

// Applies one step to every parameter using its accumulated gradient (zero
// when absent). `lr` overrides the configured rate for schedules.
inline void adam_step(std::span<Tensor> params, AdamState& state, double lr) {
  if (state.moments.empty()) state.moments.resize(params.size());
  if (state.moments.size() != params.size())
    throw DimensionError("adam: parameter list changed between steps");
  ++state.step;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto g = params[p].grad_or_zero();
    adam_update(params[p].mutable_values(), g, state.moments[p], state.step, state.config, lr);
  }
}

inline void adam_step(std::span<Tensor> params, AdamState& state) {
  adam_step(params, state, state.config.lr);
}

}  // namespace flowmat
