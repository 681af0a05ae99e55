/**
 * @file metrics.hpp
 * @brief NMSE in dB, eigenvector cosine similarity (Rho), frequency
 *        correlation and the truncation feedback baseline.
 */
#pragma once

#include <cmath>
#include <iostream>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "flowmat/channel/types.hpp"
#include "flowmat/quantizer/quantizer.hpp"

namespace flowmat::eval {

using flowmat::cdouble;
using channel::ChannelTensor;
using channel::EigenMatrix;

inline constexpr double kNmseFloorDb = -120.0;

struct NmseAccumulator {
  double err = 0.0;
  double ref = 0.0;

  void add(const ChannelTensor& estimate, const ChannelTensor& truth) {
    if (!estimate.same_dims(truth)) throw DimensionError("nmse: shape mismatch");
    for (std::size_t i = 0; i < truth.data.size(); ++i) {
      err += std::norm(estimate.data[i] - truth.data[i]);
      ref += std::norm(truth.data[i]);
    }
  }
  double db() const {
    if (ref == 0.0) throw ValidationError("nmse: truth is all zero");
    if (err == 0.0) return kNmseFloorDb;
    return std::max(kNmseFloorDb, 10.0 * std::log10(err / ref));
  }
};

// 10 log10(sum |h_hat - h|^2 / sum |h|^2) over all entries and samples,
// clamped at -120 dB.
inline double nmse_db(std::span<const ChannelTensor> estimate, std::span<const ChannelTensor> truth) {
  if (estimate.size() != truth.size() || truth.empty()) throw DimensionError("nmse: batch mismatch");
  NmseAccumulator acc;
  for (std::size_t i = 0; i < truth.size(); ++i) acc.add(estimate[i], truth[i]);
  return acc.db();
}

inline double nmse_db(const ChannelTensor& estimate, const ChannelTensor& truth) {
  return nmse_db(std::span<const ChannelTensor>(&estimate, 1), std::span<const ChannelTensor>(&truth, 1));
}

// |a^H b| / (|a| |b|).
inline double cosine_similarity(std::span<const cdouble> a, std::span<const cdouble> b) {
  if (a.size() != b.size()) throw DimensionError("cosine similarity: length mismatch");
  cdouble inner{0.0, 0.0};
  double na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inner += std::conj(a[i]) * b[i];
    na += std::norm(a[i]);
    nb += std::norm(b[i]);
  }
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine similarity: zero-norm vector");
  // Cauchy-Schwarz holds exactly; rounding can push the ratio past 1.
  return std::min(1.0, std::abs(inner) / std::sqrt(na * nb));
}

// Mean over samples and subbands of |w^H w'| / (|w| |w'|).
inline double rho(std::span<const EigenMatrix> truth, std::span<const EigenMatrix> pred) {
  if (truth.size() != pred.size() || truth.empty()) throw DimensionError("rho: batch mismatch");
  double total = 0.0;
  std::size_t rows = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& a = truth[i];
    const auto& b = pred[i];
    if (a.n_subband != b.n_subband || a.n_tx != b.n_tx) throw DimensionError("rho: shape mismatch");
    for (std::size_t s = 0; s < a.n_subband; ++s) {
      const std::span<const cdouble> ra(a.data.data() + s * a.n_tx, a.n_tx);
      const std::span<const cdouble> rb(b.data.data() + s * b.n_tx, b.n_tx);
      total += cosine_similarity(ra, rb);
      ++rows;
    }
  }
  return total / static_cast<double>(rows);
}

inline double rho(const EigenMatrix& truth, const EigenMatrix& pred) {
  return rho(std::span<const EigenMatrix>(&truth, 1), std::span<const EigenMatrix>(&pred, 1));
}

// C[i][j] = |<x_i, x_j>| / (|x_i| |x_j|) over per-frequency spatial vectors.
// Zero-norm vectors give NaN cells and a warning on stderr.
inline std::vector<std::vector<double>> freq_correlation(const std::vector<std::vector<cdouble>>& units) {
  const std::size_t n = units.size();
  if (n < 2) throw ValidationError("freq_correlation needs at least two frequency units");
  std::vector<double> norms(n);
  bool warned = false;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (auto z : units[i]) s += std::norm(z);
    norms[i] = std::sqrt(s);
    if (s == 0.0 && !warned) {
      std::cerr << "warning: freq_correlation: zero-norm vector at unit " << i << "\n";
      warned = true;
    }
  }
  std::vector<std::vector<double>> c(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double v;
      if (norms[i] == 0.0 || norms[j] == 0.0) {
        v = std::numeric_limits<double>::quiet_NaN();
      } else if (i == j) {
        v = 1.0;
      } else {
        cdouble inner{0.0, 0.0};
        for (std::size_t t = 0; t < units[i].size(); ++t) inner += std::conj(units[i][t]) * units[j][t];
        v = std::min(1.0, std::abs(inner) / (norms[i] * norms[j]));
      }
      c[i][j] = c[j][i] = v;
    }
  }
  return c;
}

inline std::vector<std::vector<double>> freq_correlation(const ChannelTensor& h) {
  std::vector<std::vector<cdouble>> units;
  for (std::size_t k = 0; k < h.n_sub; ++k) units.push_back(h.spatial_vector(k));
  return freq_correlation(units);
}

inline std::vector<std::vector<double>> freq_correlation(const EigenMatrix& w) {
  std::vector<std::vector<cdouble>> units;
  for (std::size_t s = 0; s < w.n_subband; ++s) units.push_back(w.row(s));
  return freq_correlation(units);
}

// Mean of the off-diagonal entries, NaN cells skipped.
inline double mean_off_diagonal(const std::vector<std::vector<double>>& c) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j)
      if (i != j && !std::isnan(c[i][j])) {
        total += c[i][j];
        ++n;
      }
  return n ? total / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

// Non-learned feedback: send the first `keep` subbands, each real component
// uniformly quantized with bits / (keep * 2 N_t) bits over +-3/sqrt(2 N_t),
// and hold the last sent subband for the rest. Without a bit budget the kept
// values are sent exactly.
inline EigenMatrix baseline_truncation(const EigenMatrix& w, std::size_t keep,
                                       std::optional<std::size_t> bits = std::nullopt) {
  if (keep == 0) throw ValidationError("truncation baseline: at least one subband must be kept");
  if (keep > w.n_subband) throw ValidationError("truncation baseline: keep exceeds subband count");
  const std::size_t reals = keep * 2 * w.n_tx;
  std::optional<quant::UniformQuantizerSpec> spec;
  if (bits) {
    const std::size_t b = *bits / reals;
    if (b < 1 || b > 16)
      throw ValidationError("truncation baseline: budget does not give 1..16 bits per value");
    const double r = 3.0 / std::sqrt(static_cast<double>(2 * w.n_tx));
    spec = quant::UniformQuantizerSpec{static_cast<unsigned>(b), -r, r};
  }
  auto q = [&](double x) {
    return spec ? quant::uniform_value(quant::uniform_index(x, *spec), *spec) : x;
  };
  EigenMatrix out(w.n_subband, w.n_tx);
  for (std::size_t s = 0; s < w.n_subband; ++s) {
    const std::size_t src = std::min(s, keep - 1);
    for (std::size_t t = 0; t < w.n_tx; ++t) {
      if (s < keep)
        out(s, t) = {q(w(s, t).real()), q(w(s, t).imag())};
      else
        out(s, t) = out(src, t);
    }
  }
  for (std::size_t s = 0; s < out.n_subband; ++s) {
    double n2 = 0.0;
    for (std::size_t t = 0; t < out.n_tx; ++t) n2 += std::norm(out(s, t));
    if (n2 == 0.0) throw ValidationError("truncation baseline: zero row");
    for (std::size_t t = 0; t < out.n_tx; ++t) out(s, t) /= std::sqrt(n2);
  }
  return out;
}

// Feasible keep counts for a budget (each kept real gets at least one bit).
inline std::vector<std::size_t> truncation_keep_options(std::size_t n_subband, std::size_t n_tx,
                                                        std::size_t bits) {
  std::vector<std::size_t> out;
  for (std::size_t k = 1; k <= n_subband; ++k) {
    const std::size_t b = bits / (k * 2 * n_tx);
    if (b >= 1 && b <= 16) out.push_back(k);
  }
  return out;
}

}  // namespace flowmat::eval
