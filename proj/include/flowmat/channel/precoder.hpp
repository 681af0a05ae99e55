#pragma once

#include "flowmat/channel/types.hpp"
#include "flowmat/numerics/eigen.hpp"

namespace flowmat::channel {

// Dominant eigenvector of the subband-averaged Gram matrix H_kᴴ H_k for each
// of geom.n_subband contiguous subbands.
inline EigenMatrix compute_precoders(const ChannelTensor& h, const SystemGeometry& geom,
                                     const PowerIterationOptions& opt = {}) {
  geom.validate();
  if (h.n_sub != geom.n_sub || h.n_tx != geom.n_tx || h.n_rx != geom.n_rx)
    throw DimensionError("compute_precoders: channel does not match geometry");
  const std::size_t width = geom.subband_width();
  EigenMatrix w(geom.n_subband, geom.n_tx);
  for (std::size_t s = 0; s < geom.n_subband; ++s) {
    ComplexMatrix acc(geom.n_tx, geom.n_tx);
    for (std::size_t k = s * width; k < (s + 1) * width; ++k) {
      const auto g = gram(h.subcarrier_matrix(k));
      for (std::size_t i = 0; i < g.re.size(); ++i) {
        acc.re[i] += g.re[i];
        acc.im[i] += g.im[i];
      }
    }
    for (std::size_t i = 0; i < acc.re.size(); ++i) {
      acc.re[i] /= static_cast<double>(width);
      acc.im[i] /= static_cast<double>(width);
    }
    // Gram accumulation leaves rounding-level asymmetry; symmetrize exactly.
    for (std::size_t i = 0; i < geom.n_tx; ++i)
      for (std::size_t j = i; j < geom.n_tx; ++j) {
        const cdouble avg = 0.5 * (acc(i, j) + std::conj(acc(j, i)));
        acc.set(i, j, avg);
        acc.set(j, i, std::conj(avg));
      }
    w.set_row(s, hermitian_top_eigpair(acc, opt).vector);
  }
  return w;
}

}  // namespace flowmat::channel
