/**
 * @file pilots.hpp
 * @brief Pilot observation under additive noise, LS estimation and linear
 *        frequency interpolation (the classical estimation baseline).
 */
#pragma once

#include <cmath>
#include <limits>
#include <random>

#include "flowmat/channel/types.hpp"

namespace flowmat::channel {

inline double snr_to_noise_variance(double snr_db) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  return std::pow(10.0, -snr_db / 10.0);
}

// Channel restricted to the pilot subcarriers.
inline PilotChannel restrict_to_pilots(const ChannelTensor& h,
                                       const std::vector<std::size_t>& pilot_indices) {
  PilotChannel out{pilot_indices, ChannelTensor(h.n_rx, pilot_indices.size(), h.n_tx)};
  for (std::size_t r = 0; r < h.n_rx; ++r)
    for (std::size_t p = 0; p < pilot_indices.size(); ++p) {
      if (pilot_indices[p] >= h.n_sub) throw DimensionError("pilot index beyond channel width");
      for (std::size_t t = 0; t < h.n_tx; ++t) out.values(r, p, t) = h(r, pilot_indices[p], t);
    }
  return out;
}

// Unit pilot symbols on every pilot tone plus circular complex Gaussian noise
// of per-entry variance 10^(-snr_db/10). snr_db = +inf disables the noise.
inline PilotObservation observe_pilots(const ChannelTensor& h, const SystemGeometry& geom,
                                       double snr_db, std::uint64_t seed) {
  if (std::isnan(snr_db) || (std::isinf(snr_db) && snr_db < 0))
    throw ValidationError("snr_db must be finite or +inf");
  geom.pilot_pattern.validate(h.n_sub);
  auto restricted = restrict_to_pilots(h, geom.pilot_pattern.pilot_indices);
  PilotObservation obs{restricted.pilot_indices, std::move(restricted.values), snr_db, seed};
  const double var = snr_to_noise_variance(snr_db);
  if (var > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(var / 2.0));
    for (auto& z : obs.data.data) {
      const double nr = gauss(rng);
      const double ni = gauss(rng);
      z += cdouble{nr, ni};
    }
  }
  return obs;
}

// Closed-form LS for y = h ⊙ s: h = y / s per entry. `symbols` has one entry
// per observation element (same layout as obs.data).
inline PilotChannel ls_estimate(const PilotObservation& obs, const std::vector<cdouble>& symbols) {
  if (symbols.size() != obs.data.data.size())
    throw DimensionError("ls_estimate: pilot symbol count mismatch");
  PilotChannel out{obs.pilot_indices, obs.data};
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (symbols[i] == cdouble{0.0, 0.0}) throw ValidationError("ls_estimate: zero pilot symbol");
    out.values.data[i] = obs.data.data[i] / symbols[i];
  }
  return out;
}

// Unit pilots: the LS estimate is the observation itself.
inline PilotChannel ls_estimate(const PilotObservation& obs) {
  return PilotChannel{obs.pilot_indices, obs.data};
}

// Linear interpolation of real and imaginary parts across subcarrier index per
// (rx, tx); constant extrapolation outside the outermost pilots.
inline ChannelTensor interpolate_frequency(const PilotChannel& partial, std::size_t n_sub) {
  const auto& idx = partial.pilot_indices;
  if (idx.size() < 2) throw ValidationError("interpolation needs at least two pilots");
  if (partial.values.n_sub != idx.size()) throw DimensionError("pilot value count mismatch");
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n_sub) throw ValidationError("pilot index beyond subcarrier count");
    if (i > 0 && idx[i] <= idx[i - 1]) throw ValidationError("pilot indices must increase");
  }
  const auto& v = partial.values;
  ChannelTensor out(v.n_rx, n_sub, v.n_tx);
  std::size_t seg = 0;  // idx[seg] <= k < idx[seg+1]
  for (std::size_t k = 0; k < n_sub; ++k) {
    while (seg + 2 < idx.size() && idx[seg + 1] <= k) ++seg;
    for (std::size_t r = 0; r < v.n_rx; ++r)
      for (std::size_t t = 0; t < v.n_tx; ++t) {
        cdouble value;
        if (k <= idx.front()) {
          value = v(r, 0, t);
        } else if (k >= idx.back()) {
          value = v(r, idx.size() - 1, t);
        } else {
          const double x0 = static_cast<double>(idx[seg]);
          const double x1 = static_cast<double>(idx[seg + 1]);
          const double w = (static_cast<double>(k) - x0) / (x1 - x0);
          const cdouble a = v(r, seg, t), b = v(r, seg + 1, t);
          value = {a.real() + w * (b.real() - a.real()), a.imag() + w * (b.imag() - a.imag())};
        }
        out(r, k, t) = value;
      }
  }
  return out;
}

}  // namespace flowmat::channel
