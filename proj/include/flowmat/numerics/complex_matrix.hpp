#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "flowmat/common/errors.hpp"

namespace flowmat {

using cdouble = std::complex<double>;

// Dense complex matrix stored as separate row-major real and imaginary parts.
struct ComplexMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> re;
  std::vector<double> im;

  ComplexMatrix() = default;
  ComplexMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), re(r * c, 0.0), im(r * c, 0.0) {}

  cdouble operator()(std::size_t r, std::size_t c) const {
    return {re[r * cols + c], im[r * cols + c]};
  }
  void set(std::size_t r, std::size_t c, cdouble v) {
    re[r * cols + c] = v.real();
    im[r * cols + c] = v.imag();
  }
  void add(std::size_t r, std::size_t c, cdouble v) {
    re[r * cols + c] += v.real();
    im[r * cols + c] += v.imag();
  }

  void validate() const {
    if (re.size() != rows * cols || im.size() != rows * cols)
      throw DimensionError("complex matrix storage does not match its dimensions");
  }

  static ComplexMatrix identity(std::size_t n) {
    ComplexMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.re[i * n + i] = 1.0;
    return m;
  }
};

inline ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols != b.rows) throw DimensionError("complex matmul: inner dimensions disagree");
  ComplexMatrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t p = 0; p < a.cols; ++p) {
      const double ar = a.re[i * a.cols + p], ai = a.im[i * a.cols + p];
      for (std::size_t j = 0; j < b.cols; ++j) {
        const double br = b.re[p * b.cols + j], bi = b.im[p * b.cols + j];
        out.re[i * b.cols + j] += ar * br - ai * bi;
        out.im[i * b.cols + j] += ar * bi + ai * br;
      }
    }
  return out;
}

inline std::vector<cdouble> operator*(const ComplexMatrix& a, const std::vector<cdouble>& x) {
  if (a.cols != x.size()) throw DimensionError("complex matvec: size mismatch");
  std::vector<cdouble> y(a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double yr = 0.0, yi = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) {
      const double ar = a.re[i * a.cols + j], ai = a.im[i * a.cols + j];
      yr += ar * x[j].real() - ai * x[j].imag();
      yi += ar * x[j].imag() + ai * x[j].real();
    }
    y[i] = {yr, yi};
  }
  return y;
}

inline ComplexMatrix conj_transpose(const ComplexMatrix& a) {
  ComplexMatrix out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) {
      out.re[j * a.rows + i] = a.re[i * a.cols + j];
      out.im[j * a.rows + i] = -a.im[i * a.cols + j];
    }
  return out;
}

// Aᴴ·A, the Gram matrix used for eigen-precoding.
inline ComplexMatrix gram(const ComplexMatrix& a) { return conj_transpose(a) * a; }

inline double norm2(const std::vector<cdouble>& v) {
  double s = 0.0;
  for (const auto& z : v) s += std::norm(z);
  return std::sqrt(s);
}

// ⟨a, b⟩ = aᴴ b
inline cdouble inner(const std::vector<cdouble>& a, const std::vector<cdouble>& b) {
  cdouble s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

}  // namespace flowmat
