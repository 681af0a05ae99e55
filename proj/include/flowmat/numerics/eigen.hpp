/**
 * @file eigen.hpp
 * @brief Dominant eigenpair of a Hermitian positive semidefinite matrix.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "flowmat/numerics/complex_matrix.hpp"

namespace flowmat {

struct EigenPair {
  double value = 0.0;
  std::vector<cdouble> vector;  // unit norm, largest-magnitude entry real >= 0
};

struct PowerIterationOptions {
  double tolerance = 1e-10;  // on ||A v - lambda v|| / lambda
  std::size_t max_iterations = 10000;
  // The iteration matrix is squared after this many unconverged steps, which
  // raises the eigenvalue ratio to a power of two and shortcuts small gaps.
  std::size_t squaring_interval = 8;
  std::size_t max_squarings = 40;
  double hermitian_tolerance = 1e-8;
};

namespace detail {

inline void rescale_by_max(ComplexMatrix& m) {
  double mx = 0.0;
  for (std::size_t i = 0; i < m.re.size(); ++i) mx = std::max(mx, std::hypot(m.re[i], m.im[i]));
  if (mx > 0.0)
    for (std::size_t i = 0; i < m.re.size(); ++i) {
      m.re[i] /= mx;
      m.im[i] /= mx;
    }
}

inline void normalize_phase(std::vector<cdouble>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best]) * (1.0 + 1e-12)) best = i;
  const double mag = std::abs(v[best]);
  if (mag == 0.0) return;
  const cdouble rot = std::conj(v[best]) / mag;
  for (auto& z : v) z *= rot;
  v[best] = {std::abs(v[best]), 0.0};
}

}  // namespace detail

// Power iteration with periodic squaring of the iteration matrix. The stopping
// test always uses the original matrix.
inline EigenPair hermitian_top_eigpair(const ComplexMatrix& a,
                                       const PowerIterationOptions& opt = {}) {
  a.validate();
  if (a.rows != a.cols || a.rows == 0) throw ValidationError("eigpair: matrix must be square");
  const std::size_t n = a.rows;
  double amax = 0.0;
  for (std::size_t i = 0; i < a.re.size(); ++i) {
    if (!std::isfinite(a.re[i]) || !std::isfinite(a.im[i]))
      throw ValidationError("eigpair: non-finite entry");
    amax = std::max(amax, std::hypot(a.re[i], a.im[i]));
  }
  const double herm_tol = opt.hermitian_tolerance * std::max(1.0, amax);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j)
      if (std::abs(a(i, j) - std::conj(a(j, i))) > herm_tol)
        throw ValidationError("eigpair: matrix is not Hermitian");

  EigenPair out;
  out.vector.assign(n, cdouble{0.0, 0.0});
  if (amax == 0.0) {
    out.vector[0] = 1.0;
    return out;
  }

  // Start from the column of largest norm.
  std::size_t start = 0;
  double best = -1.0;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::norm(a(i, j));
    if (s > best) {
      best = s;
      start = j;
    }
  }
  std::vector<cdouble> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = a(i, start);
  {
    const double nv = norm2(v);
    for (auto& z : v) z /= nv;
  }

  ComplexMatrix iter = a;
  detail::rescale_by_max(iter);
  std::size_t since_square = 0, squarings = 0;
  double residual = 0.0;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    const auto av = a * v;
    const double lambda = inner(v, av).real();
    double r2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) r2 += std::norm(av[i] - lambda * v[i]);
    residual = std::sqrt(r2) / std::max(std::abs(lambda), amax * 1e-300);
    if (residual < opt.tolerance) {
      out.value = std::max(0.0, lambda);
      out.vector = v;
      detail::normalize_phase(out.vector);
      return out;
    }
    auto w = iter * v;
    const double nw = norm2(w);
    if (nw == 0.0) {
      // v fell into the null space of the squared iterate; restart from A v.
      w = av;
    }
    const double nrm = norm2(w);
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nrm;
    if (++since_square >= opt.squaring_interval && squarings < opt.max_squarings) {
      iter = iter * iter;
      detail::rescale_by_max(iter);
      since_square = 0;
      ++squarings;
    }
  }
  std::vector<double> flat;
  flat.reserve(2 * n);
  for (const auto& z : v) {
    flat.push_back(z.real());
    flat.push_back(z.imag());
  }
  throw ConvergenceError("eigpair: power iteration did not converge", std::move(flat), residual);
}

}  // namespace flowmat
