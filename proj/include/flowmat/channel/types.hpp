/**
 * @file types.hpp
 * @brief System geometry, pilot layouts and the complex containers for
 *        channels, pilot observations and eigen-precoders.
 */
#pragma once

#include <algorithm>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "flowmat/common/errors.hpp"
#include "flowmat/numerics/complex_matrix.hpp"

namespace flowmat::channel {

enum class PilotKind { high_density, low_density, custom };

inline const char* to_string(PilotKind k) {
  switch (k) {
    case PilotKind::high_density: return "high_density";
    case PilotKind::low_density: return "low_density";
    case PilotKind::custom: return "custom";
  }
  return "?";
}

struct PilotPattern {
  PilotKind kind = PilotKind::custom;
  std::vector<std::size_t> pilot_indices;  // strictly increasing subcarrier indices

  std::size_t size() const { return pilot_indices.size(); }

  void validate(std::size_t n_sub) const {
    if (pilot_indices.empty()) throw ValidationError("pilot pattern is empty");
    for (std::size_t i = 0; i < pilot_indices.size(); ++i) {
      if (pilot_indices[i] >= n_sub)
        throw ValidationError("pilot index " + std::to_string(pilot_indices[i]) +
                              " outside [0, " + std::to_string(n_sub) + ")");
      if (i > 0 && pilot_indices[i] <= pilot_indices[i - 1])
        throw ValidationError("pilot indices must be strictly increasing");
    }
  }

  // Every subcarrier of the listed resource blocks.
  static PilotPattern from_resource_blocks(PilotKind kind, const std::vector<std::size_t>& rbs,
                                           std::size_t subcarriers_per_rb) {
    PilotPattern p{kind, {}};
    for (auto rb : rbs)
      for (std::size_t j = 0; j < subcarriers_per_rb; ++j)
        p.pilot_indices.push_back(rb * subcarriers_per_rb + j);
    return p;
  }

  // Odd resource blocks out of 52 (26 RBs, 208 pilot subcarriers).
  static PilotPattern high_density(std::size_t n_rb = 52, std::size_t subcarriers_per_rb = 8) {
    std::vector<std::size_t> rbs;
    for (std::size_t rb = 1; rb < n_rb; rb += 2) rbs.push_back(rb);
    return from_resource_blocks(PilotKind::high_density, rbs, subcarriers_per_rb);
  }

  // Resource blocks 7, 15, ..., 47 (6 RBs, 48 pilot subcarriers).
  static PilotPattern low_density(std::size_t subcarriers_per_rb = 8) {
    return from_resource_blocks(PilotKind::low_density, {7, 15, 23, 31, 39, 47},
                                subcarriers_per_rb);
  }

  // Every `spacing`-th subcarrier starting at `offset`.
  static PilotPattern comb(std::size_t n_sub, std::size_t spacing, std::size_t offset = 0) {
    if (spacing == 0) throw ValidationError("comb spacing must be positive");
    PilotPattern p{PilotKind::custom, {}};
    for (std::size_t k = offset; k < n_sub; k += spacing) p.pilot_indices.push_back(k);
    return p;
  }

  static PilotPattern custom(std::vector<std::size_t> indices) {
    return PilotPattern{PilotKind::custom, std::move(indices)};
  }
};

struct SystemGeometry {
  std::size_t n_tx = 32;
  std::size_t n_rx = 4;
  std::size_t n_sub = 416;
  std::size_t n_subband = 13;
  PilotPattern pilot_pattern = PilotPattern::low_density();
  double subcarrier_spacing = 15e3;  // Hz

  void validate() const {
    if (n_tx == 0 || n_rx == 0 || n_sub == 0 || n_subband == 0)
      throw ValidationError("geometry sizes must be >= 1");
    if (n_sub % n_subband != 0)
      throw ValidationError("n_subband must divide the subcarrier count");
    if (!(subcarrier_spacing > 0.0)) throw ValidationError("subcarrier spacing must be positive");
    pilot_pattern.validate(n_sub);
  }
  std::size_t subband_width() const { return n_sub / n_subband; }
};

// Complex channel indexed [rx, subcarrier, tx].
struct ChannelTensor {
  std::size_t n_rx = 0, n_sub = 0, n_tx = 0;
  std::vector<cdouble> data;

  ChannelTensor() = default;
  ChannelTensor(std::size_t rx, std::size_t sub, std::size_t tx)
      : n_rx(rx), n_sub(sub), n_tx(tx), data(rx * sub * tx) {}

  std::size_t index(std::size_t r, std::size_t k, std::size_t t) const {
    return (r * n_sub + k) * n_tx + t;
  }
  cdouble& operator()(std::size_t r, std::size_t k, std::size_t t) { return data[index(r, k, t)]; }
  cdouble operator()(std::size_t r, std::size_t k, std::size_t t) const {
    return data[index(r, k, t)];
  }
  bool same_dims(const ChannelTensor& o) const {
    return n_rx == o.n_rx && n_sub == o.n_sub && n_tx == o.n_tx;
  }
  // H_k as an [n_rx x n_tx] matrix.
  ComplexMatrix subcarrier_matrix(std::size_t k) const {
    ComplexMatrix m(n_rx, n_tx);
    for (std::size_t r = 0; r < n_rx; ++r)
      for (std::size_t t = 0; t < n_tx; ++t) m.set(r, t, (*this)(r, k, t));
    return m;
  }
  // Concatenated spatial vector (all rx, all tx) at subcarrier k.
  std::vector<cdouble> spatial_vector(std::size_t k) const {
    std::vector<cdouble> v;
    v.reserve(n_rx * n_tx);
    for (std::size_t r = 0; r < n_rx; ++r)
      for (std::size_t t = 0; t < n_tx; ++t) v.push_back((*this)(r, k, t));
    return v;
  }
};

// Pilot-indexed channel values: values.n_sub == pilot_indices.size().
struct PilotChannel {
  std::vector<std::size_t> pilot_indices;
  ChannelTensor values;
};

// Received pilots indexed [rx, pilot, tx].
struct PilotObservation {
  std::vector<std::size_t> pilot_indices;
  ChannelTensor data;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

// Per-subband unit-norm eigenvectors indexed [subband, tx].
struct EigenMatrix {
  std::size_t n_subband = 0, n_tx = 0;
  std::vector<cdouble> data;

  EigenMatrix() = default;
  EigenMatrix(std::size_t s, std::size_t t) : n_subband(s), n_tx(t), data(s * t) {}

  cdouble& operator()(std::size_t s, std::size_t t) { return data[s * n_tx + t]; }
  cdouble operator()(std::size_t s, std::size_t t) const { return data[s * n_tx + t]; }
  std::vector<cdouble> row(std::size_t s) const {
    return {data.begin() + s * n_tx, data.begin() + (s + 1) * n_tx};
  }
  void set_row(std::size_t s, const std::vector<cdouble>& v) {
    std::copy(v.begin(), v.end(), data.begin() + s * n_tx);
  }
};

struct MultipathProfile {
  std::size_t n_paths = 3;
  double delay_spread = 300e-9;  // s
  double angle_spread = 0.35;    // rad, width of the per-cluster angular window
  std::uint64_t seed = 0;

  void validate() const {
    if (n_paths == 0) throw ValidationError("multipath profile needs at least one path");
    if (!(delay_spread > 0.0)) throw ValidationError("delay spread must be positive");
    if (!(angle_spread >= 0.0)) throw ValidationError("angle spread must be nonnegative");
  }
};

}  // namespace flowmat::channel
