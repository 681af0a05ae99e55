#pragma once

#include <string>

#include "flowmat/common/errors.hpp"
#include "flowmat/numerics/ops.hpp"

namespace flowmat::train {

// Which tensor normalizes the reconstruction loss.
//   canonical:     sqrt(sum err^2 / sum target^2)
//   paper_literal: sqrt(sum err^2 / sum prediction^2)
enum class LossMode { canonical, paper_literal };

inline const char* to_string(LossMode m) {
  return m == LossMode::canonical ? "canonical" : "paper_literal";
}
inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "canonical") return LossMode::canonical;
  if (s == "paper_literal") return LossMode::paper_literal;
  throw ConfigError("unknown loss mode: " + s);
}

// Normalized root squared error over every entry of pred/target. Used both
// for the pilot-denoising loss and the full-band estimation loss.
inline Tensor loss_ce(const Tensor& pred, const Tensor& target, LossMode mode) {
  if (pred.shape() != target.shape()) throw DimensionError("loss_ce: shape mismatch");
  const Tensor err = sum(square(sub(pred, target)));
  Tensor denom;
  if (mode == LossMode::canonical) {
    double t2 = 0.0;
    for (double v : target.values()) t2 += v * v;
    if (t2 == 0.0) throw ValidationError("loss_ce: all-zero target");
    denom = sum(square(stop_gradient(target)));
  } else {
    denom = sum(square(pred));
    if (denom.item() == 0.0) throw ValidationError("loss_ce: all-zero prediction");
  }
  return sqrt(div(err, denom));
}

inline Tensor loss_ce1(const Tensor& denoised, const Tensor& clean, LossMode mode) {
  return loss_ce(denoised, clean, mode);
}
inline Tensor loss_ce2(const Tensor& estimate, const Tensor& truth, LossMode mode) {
  return loss_ce(estimate, truth, mode);
}

// Per-row |w^H w'| / (|w| |w'|) for token rows laid out as [re | im].
// Returns an [S x 1] column.
inline Tensor row_cosine(const Tensor& truth, const Tensor& pred) {
  if (truth.shape() != pred.shape() || truth.dim() != 2 || truth.cols() % 2 != 0)
    throw DimensionError("row_cosine: expected equal [S x 2n] token matrices");
  const std::size_t n = truth.cols() / 2;
  const Tensor a = slice_cols(truth, 0, n), b = slice_cols(truth, n, n);
  const Tensor c = slice_cols(pred, 0, n), d = slice_cols(pred, n, n);
  // w^H w' = sum (a - jb)(c + jd) = sum(ac + bd) + j sum(ad - bc)
  const Tensor re = row_sum(add(mul(a, c), mul(b, d)));
  const Tensor im = row_sum(sub(mul(a, d), mul(b, c)));
  const Tensor n_true = row_sum(square(truth));
  const Tensor n_pred = row_sum(square(pred));
  for (std::size_t r = 0; r < truth.rows(); ++r)
    if (n_true[r] == 0.0 || n_pred[r] == 0.0) throw ValidationError("rho: zero-norm row");
  const Tensor mag = sqrt(add(square(re), square(im)));
  return div(mag, sqrt(mul(n_true, n_pred)));
}

// Mean Rho over rows of all samples, as a differentiable scalar.
inline Tensor rho_tensor(const Tensor& truth, const Tensor& pred) { return mean(row_cosine(truth, pred)); }

// The minimized feedback objective, 1 - Rho.
inline Tensor loss_cf(const Tensor& truth, const Tensor& pred) {
  return add_scalar(scale(rho_tensor(truth, pred), -1.0), 1.0);
}

}  // namespace flowmat::train
