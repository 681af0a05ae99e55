#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "flowmat/numerics/tensor.hpp"

namespace flowmat {

namespace detail {

inline void check_step(double h) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw ValidationError("grad check: step must lie in [1e-6, 1e-3]");
}

inline double scalar_of(const Tensor& y) {
  if (y.size() != 1) throw DimensionError("grad check: function output is not scalar");
  return y[0];
}

}  // namespace detail

// Max over all coordinates of every parameter of
//   |analytic - central difference| / max(1, |central difference|).
// `f` must rebuild its graph from the current parameter values on every call.
inline double finite_diff_grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                     double h = 1e-5) {
  detail::check_step(h);
  for (auto& p : params) p.zero_grad();
  const Tensor y = f();
  detail::scalar_of(y);
  y.backward();
  double worst = 0.0;
  for (auto& p : params) {
    const auto analytic = p.grad_or_zero();
    auto vals = p.mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = detail::scalar_of(f());
      vals[i] = orig - h;
      const double fm = detail::scalar_of(f());
      vals[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  for (auto& p : params) p.zero_grad();
  return worst;
}

// Single-input form: checks d f(x) / d x at x.
inline double finite_diff_grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                     double h = 1e-5) {
  Tensor var = x.detach();
  var.set_requires_grad(true);
  return finite_diff_grad_check([&] { return f(var); }, {var}, h);
}

}  // namespace flowmat
