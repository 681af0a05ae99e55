#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "flowmat/channel/types.hpp"

namespace flowmat::channel {

// Half-wavelength uniform linear array response.
inline std::vector<cdouble> ula_steering(std::size_t n, double angle) {
  std::vector<cdouble> a(n);
  const double phase = std::numbers::pi * std::sin(angle);
  for (std::size_t i = 0; i < n; ++i) a[i] = std::polar(1.0, phase * static_cast<double>(i));
  return a;
}

// Geometric multipath channel:
//   H[r,k,t] = sum_l alpha_l a_rx(theta_l)[r] a_tx(phi_l)[t] exp(-j 2 pi k df tau_l)
// alpha_l ~ CN(0,1), tau_l ~ U[0, delay_spread]; departure/arrival angles are
// drawn around a per-channel cluster centre within +-angle_spread/2. The result
// is scaled to unit mean power per entry. Deterministic per profile.seed.
inline ChannelTensor generate_channel(const SystemGeometry& geom, const MultipathProfile& profile) {
  geom.validate();
  profile.validate();
  std::mt19937_64 rng(profile.seed);
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr double kSector = std::numbers::pi / 3.0;

  const double rx_centre = (2.0 * unit(rng) - 1.0) * kSector;
  const double tx_centre = (2.0 * unit(rng) - 1.0) * kSector;

  ChannelTensor h(geom.n_rx, geom.n_sub, geom.n_tx);
  std::vector<cdouble> spatial(geom.n_rx * geom.n_tx);
  for (std::size_t l = 0; l < profile.n_paths; ++l) {
    const double ar = gauss(rng);
    const double ai = gauss(rng);
    const cdouble alpha{ar, ai};
    const double tau = unit(rng) * profile.delay_spread;
    const double theta = rx_centre + (unit(rng) - 0.5) * profile.angle_spread;
    const double phi = tx_centre + (unit(rng) - 0.5) * profile.angle_spread;
    const auto a_rx = ula_steering(geom.n_rx, theta);
    const auto a_tx = ula_steering(geom.n_tx, phi);
    for (std::size_t r = 0; r < geom.n_rx; ++r)
      for (std::size_t t = 0; t < geom.n_tx; ++t) spatial[r * geom.n_tx + t] = alpha * a_rx[r] * a_tx[t];
    for (std::size_t k = 0; k < geom.n_sub; ++k) {
      const cdouble ramp = std::polar(
          1.0, -2.0 * std::numbers::pi * static_cast<double>(k) * geom.subcarrier_spacing * tau);
      for (std::size_t r = 0; r < geom.n_rx; ++r)
        for (std::size_t t = 0; t < geom.n_tx; ++t) h(r, k, t) += spatial[r * geom.n_tx + t] * ramp;
    }
  }
  double power = 0.0;
  for (const auto& z : h.data) power += std::norm(z);
  power /= static_cast<double>(h.data.size());
  if (power > 0.0) {
    const double s = 1.0 / std::sqrt(power);
    for (auto& z : h.data) z *= s;
  }
  return h;
}

// Reorders [rx, subcarrier, tx] into the [rx, tx, subcarrier] export layout.
inline std::vector<cdouble> to_export_layout(const ChannelTensor& h) {
  std::vector<cdouble> out(h.data.size());
  for (std::size_t r = 0; r < h.n_rx; ++r)
    for (std::size_t t = 0; t < h.n_tx; ++t)
      for (std::size_t k = 0; k < h.n_sub; ++k) out[(r * h.n_tx + t) * h.n_sub + k] = h(r, k, t);
  return out;
}

inline ChannelTensor from_export_layout(const std::vector<cdouble>& flat, std::size_t n_rx,
                                        std::size_t n_tx, std::size_t n_sub) {
  if (flat.size() != n_rx * n_tx * n_sub) throw DimensionError("export layout size mismatch");
  ChannelTensor h(n_rx, n_sub, n_tx);
  for (std::size_t r = 0; r < n_rx; ++r)
    for (std::size_t t = 0; t < n_tx; ++t)
      for (std::size_t k = 0; k < n_sub; ++k) h(r, k, t) = flat[(r * n_tx + t) * n_sub + k];
  return h;
}

}  // namespace flowmat::channel
