/**
 * @file ops.hpp
 * @brief Differentiable tensor operations used by the model and the losses.
 *
 * Matrices are 2-D tensors. Vectors (gains, biases, queries) may be 1-D; ops
 * that broadcast a vector over rows only look at its element count.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowmat/numerics/tensor.hpp"

namespace flowmat {

namespace detail {

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.dim() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

// Gradient buffer of parent i, or nullptr when that parent is constant.
inline std::vector<double>* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

inline const std::vector<double>& parent_value(Node& self, std::size_t i) {
  return self.parents[i]->value;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

namespace detail {
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
inline Eigen::Map<const RowMatrix> view(const double* p, std::size_t r, std::size_t c) {
  return {p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}
inline Eigen::Map<RowMatrix> view(double* p, std::size_t r, std::size_t c) {
  return {p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}
}  // namespace detail

// a [m×k] · b [k×n]. Backward: dA = G·Bᵀ, dB = Aᵀ·G.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  std::vector<double> out(m * n);
  detail::view(out.data(), m, n).noalias() =
      detail::view(a.values().data(), m, k) * detail::view(b.values().data(), k, n);
  return Tensor::from_op({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    const auto G = detail::view(self.grad.data(), m, n);
    if (auto* dA = detail::parent_grad(self, 0))
      detail::view(dA->data(), m, k).noalias() +=
          G * detail::view(detail::parent_value(self, 1).data(), k, n).transpose();
    if (auto* dB = detail::parent_grad(self, 1))
      detail::view(dB->data(), k, n).noalias() +=
          detail::view(detail::parent_value(self, 0).data(), m, k).transpose() * G;
  });
}

// a [m×k] · bᵀ where b is [n×k]; avoids materializing the transpose.
inline Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul_transposed");
  detail::require_matrix(b, "matmul_transposed");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw DimensionError("matmul_transposed: inner dimensions disagree " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()) + "^T");
  std::vector<double> out(m * n);
  detail::view(out.data(), m, n).noalias() =
      detail::view(a.values().data(), m, k) * detail::view(b.values().data(), n, k).transpose();
  return Tensor::from_op({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    const auto G = detail::view(self.grad.data(), m, n);
    if (auto* dA = detail::parent_grad(self, 0))
      detail::view(dA->data(), m, k).noalias() +=
          G * detail::view(detail::parent_value(self, 1).data(), n, k);
    if (auto* dB = detail::parent_grad(self, 1))
      detail::view(dB->data(), n, k).noalias() +=
          G.transpose() * detail::view(detail::parent_value(self, 0).data(), m, k);
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
  return Tensor::from_op({n, m}, std::move(out), {a}, [m, n](detail::Node& self) {
    auto* dA = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) (*dA)[i * n + j] += self.grad[j * m + i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (auto* d = detail::parent_grad(self, p))
        for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    if (auto* d = detail::parent_grad(self, 0))
      for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i];
    if (auto* d = detail::parent_grad(self, 1))
      for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] -= self.grad[i];
  });
}

// Hadamard product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& A = detail::parent_value(self, 0);
    const auto& B = detail::parent_value(self, 1);
    if (auto* d = detail::parent_grad(self, 0))
      for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i] * B[i];
    if (auto* d = detail::parent_grad(self, 1))
      for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i] * A[i];
  });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "div");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (b[i] == 0.0) throw ValidationError("div: division by zero");
    out[i] = a[i] / b[i];
  }
  return Tensor::from_op(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    const auto& A = detail::parent_value(self, 0);
    const auto& B = detail::parent_value(self, 1);
    if (auto* d = detail::parent_grad(self, 0))
      for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i] / B[i];
    if (auto* d = detail::parent_grad(self, 1))
      for (std::size_t i = 0; i < d->size(); ++i)
        (*d)[i] -= self.grad[i] * A[i] / (B[i] * B[i]);
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * c;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [c](detail::Node& self) {
    auto* d = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i] * c;
  });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + c;
  return Tensor::from_op(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    auto* d = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i];
  });
}

inline Tensor square(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * a[i];
  return Tensor::from_op(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    const auto& A = detail::parent_value(self, 0);
    auto* d = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += 2.0 * A[i] * self.grad[i];
  });
}

// sqrt(a + eps); eps keeps the derivative finite at zero when needed.
inline Tensor sqrt(const Tensor& a, double eps = 0.0) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = a[i] + eps;
    if (v < 0.0) throw ValidationError("sqrt: negative argument");
    out[i] = std::sqrt(v);
  }
  return Tensor::from_op(a.shape(), out, {a}, [out](detail::Node& self) {
    auto* d = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < d->size(); ++i)
      if (out[i] > 0.0) (*d)[i] += self.grad[i] * 0.5 / out[i];
  });
}

// tanh-form GELU.
inline Tensor gelu(const Tensor& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a[i];
    out[i] = 0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x)));
  }
  return Tensor::from_op(a.shape(), std::move(out), {a}, [](detail::Node& self) {
    const auto& A = detail::parent_value(self, 0);
    auto* d = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < d->size(); ++i) {
      const double x = A[i];
      const double u = kC * (x + 0.044715 * x * x * x);
      const double t = std::tanh(u);
      const double du = kC * (1.0 + 3.0 * 0.044715 * x * x);
      (*d)[i] += self.grad[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and broadcasting

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return Tensor::from_op({1}, {acc}, {a}, [](detail::Node& self) {
    auto* d = detail::parent_grad(self, 0);
    for (auto& v : *d) v += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

// [n×d] -> [n×1]
inline Tensor row_sum(const Tensor& a) {
  detail::require_matrix(a, "row_sum");
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i] += a[i * d + j];
  return Tensor::from_op({n, 1}, std::move(out), {a}, [n, d](detail::Node& self) {
    auto* g = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) (*g)[i * d + j] += self.grad[i];
  });
}

// x [n×d] + v (d elements) added to every row.
inline Tensor add_row_vector(const Tensor& x, const Tensor& v) {
  detail::require_matrix(x, "add_row_vector");
  const std::size_t n = x.rows(), d = x.cols();
  if (v.size() != d)
    throw DimensionError("add_row_vector: vector of " + std::to_string(v.size()) +
                         " for rows of " + std::to_string(d));
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x[i * d + j] + v[j];
  return Tensor::from_op(x.shape(), std::move(out), {x, v}, [n, d](detail::Node& self) {
    if (auto* g = detail::parent_grad(self, 0))
      for (std::size_t i = 0; i < n * d; ++i) (*g)[i] += self.grad[i];
    if (auto* g = detail::parent_grad(self, 1))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) (*g)[j] += self.grad[i * d + j];
  });
}

// ---------------------------------------------------------------------------
// Normalization

// Row-wise softmax, stabilized by subtracting the row max.
inline Tensor softmax_rows(const Tensor& x) {
  detail::require_matrix(x, "softmax_rows");
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.values().data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      out[i * m + j] = std::exp(row[j] - mx);
      z += out[i * m + j];
    }
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= z;
  }
  return Tensor::from_op(x.shape(), out, {x}, [out, n, m](detail::Node& self) {
    auto* g = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += self.grad[i * m + j] * out[i * m + j];
      for (std::size_t j = 0; j < m; ++j)
        (*g)[i * m + j] += out[i * m + j] * (self.grad[i * m + j] - dot);
    }
  });
}

// Per-row standardization followed by gain/bias (each with d elements).
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
  detail::require_matrix(x, "layer_norm");
  const std::size_t n = x.rows(), d = x.cols();
  if (d == 0) throw DimensionError("layer_norm: empty rows");
  if (gain.size() != d || bias.size() != d)
    throw DimensionError("layer_norm: gain/bias size must equal row width");
  std::vector<double> xhat(n * d), inv_std(n), out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.values().data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mu) * inv_std[i];
      out[i * d + j] = xhat[i * d + j] * gain[j] + bias[j];
    }
  }
  return Tensor::from_op(x.shape(), std::move(out), {x, gain, bias},
                         [xhat = std::move(xhat), inv_std = std::move(inv_std), n,
                          d](detail::Node& self) {
                           const auto& G = self.grad;
                           const auto& gain = detail::parent_value(self, 1);
                           if (auto* dx = detail::parent_grad(self, 0)) {
                             const double inv_d = 1.0 / static_cast<double>(d);
                             for (std::size_t i = 0; i < n; ++i) {
                               double s1 = 0.0, s2 = 0.0;
                               for (std::size_t j = 0; j < d; ++j) {
                                 const double gh = G[i * d + j] * gain[j];
                                 s1 += gh;
                                 s2 += gh * xhat[i * d + j];
                               }
                               for (std::size_t j = 0; j < d; ++j) {
                                 const double gh = G[i * d + j] * gain[j];
                                 (*dx)[i * d + j] +=
                                     inv_std[i] * (gh - inv_d * s1 - xhat[i * d + j] * inv_d * s2);
                               }
                             }
                           }
                           if (auto* dg = detail::parent_grad(self, 1))
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < d; ++j)
                                 (*dg)[j] += G[i * d + j] * xhat[i * d + j];
                           if (auto* db = detail::parent_grad(self, 2))
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < d; ++j) (*db)[j] += G[i * d + j];
                         });
}

// ---------------------------------------------------------------------------
// Reshaping, slicing, gathering

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size())
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  return Tensor::from_op(std::move(shape), a.vec(), {a}, [](detail::Node& self) {
    auto* d = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i];
  });
}

inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  detail::require_matrix(a, "slice_cols");
  const std::size_t n = a.rows(), d = a.cols();
  if (begin + count > d) throw DimensionError("slice_cols: range out of bounds");
  std::vector<double> out(n * count);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(a.values().data() + i * d + begin, count, out.data() + i * count);
  return Tensor::from_op({n, count}, std::move(out), {a}, [n, d, begin, count](detail::Node& self) {
    auto* g = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < count; ++j) (*g)[i * d + begin + j] += self.grad[i * count + j];
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_cols");
    if (p.rows() != n) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(p.values().data() + i * w, w, out.data() + i * total + offset);
    offset += w;
  }
  return Tensor::from_op({n, total}, std::move(out), parts,
                         [n, total, widths](detail::Node& self) {
                           std::size_t offset = 0;
                           for (std::size_t p = 0; p < widths.size(); ++p) {
                             const std::size_t w = widths[p];
                             if (auto* g = detail::parent_grad(self, p))
                               for (std::size_t i = 0; i < n; ++i)
                                 for (std::size_t j = 0; j < w; ++j)
                                   (*g)[i * w + j] += self.grad[i * total + offset + j];
                             offset += w;
                           }
                         });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t d = parts.front().cols();
  std::size_t total = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_rows");
    if (p.cols() != d) throw DimensionError("concat_rows: column counts differ");
    total += p.rows();
    sizes.push_back(p.size());
  }
  std::vector<double> out;
  out.reserve(total * d);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return Tensor::from_op({total, d}, std::move(out), parts, [sizes](detail::Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < sizes.size(); ++p) {
      if (auto* g = detail::parent_grad(self, p))
        for (std::size_t i = 0; i < sizes[p]; ++i) (*g)[i] += self.grad[offset + i];
      offset += sizes[p];
    }
  });
}

inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  detail::require_matrix(a, "slice_rows");
  const std::size_t d = a.cols();
  if (begin + count > a.rows()) throw DimensionError("slice_rows: range out of bounds");
  std::vector<double> out(a.values().begin() + begin * d, a.values().begin() + (begin + count) * d);
  return Tensor::from_op({count, d}, std::move(out), {a}, [begin, d](detail::Node& self) {
    auto* g = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[begin * d + i] += self.grad[i];
  });
}

// Rows of x at the given indices, in the given order.
inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& indices) {
  detail::require_matrix(x, "gather_rows");
  const std::size_t d = x.cols();
  std::vector<double> out(indices.size() * d);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= x.rows()) throw DimensionError("gather_rows: index out of range");
    std::copy_n(x.values().data() + indices[r] * d, d, out.data() + r * d);
  }
  return Tensor::from_op({indices.size(), d}, std::move(out), {x},
                         [indices, d](detail::Node& self) {
                           auto* g = detail::parent_grad(self, 0);
                           for (std::size_t r = 0; r < indices.size(); ++r)
                             for (std::size_t j = 0; j < d; ++j)
                               (*g)[indices[r] * d + j] += self.grad[r * d + j];
                         });
}

// Builds an [n×d] matrix whose row positions[r] is rows.row(r) and every other
// row is `fill` (d elements). positions must be distinct.
inline Tensor scatter_rows(const Tensor& rows, const std::vector<std::size_t>& positions,
                           std::size_t n, const Tensor& fill) {
  detail::require_matrix(rows, "scatter_rows");
  const std::size_t d = rows.cols();
  if (rows.rows() != positions.size())
    throw DimensionError("scatter_rows: row count does not match position count");
  if (fill.size() != d) throw DimensionError("scatter_rows: fill width mismatch");
  std::vector<int> source(n, -1);
  for (std::size_t r = 0; r < positions.size(); ++r) {
    if (positions[r] >= n) throw DimensionError("scatter_rows: position out of range");
    if (source[positions[r]] != -1) throw ValidationError("scatter_rows: index collision");
    source[positions[r]] = static_cast<int>(r);
  }
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = source[i] >= 0 ? rows.values().data() + source[i] * d : fill.values().data();
    std::copy_n(src, d, out.data() + i * d);
  }
  return Tensor::from_op({n, d}, std::move(out), {rows, fill},
                         [source = std::move(source), n, d](detail::Node& self) {
                           auto* gr = detail::parent_grad(self, 0);
                           auto* gf = detail::parent_grad(self, 1);
                           for (std::size_t i = 0; i < n; ++i) {
                             if (source[i] >= 0) {
                               if (gr)
                                 for (std::size_t j = 0; j < d; ++j)
                                   (*gr)[source[i] * d + j] += self.grad[i * d + j];
                             } else if (gf) {
                               for (std::size_t j = 0; j < d; ++j) (*gf)[j] += self.grad[i * d + j];
                             }
                           }
                         });
}

// ---------------------------------------------------------------------------
// Straight-through constructions

// Forward value is `forward_values`; backward passes the incoming gradient to
// x unchanged.
inline Tensor straight_through(const Tensor& x, std::vector<double> forward_values) {
  if (forward_values.size() != x.size())
    throw DimensionError("straight_through: value count mismatch");
  return Tensor::from_op(x.shape(), std::move(forward_values), {x}, [](detail::Node& self) {
    auto* d = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < d->size(); ++i) (*d)[i] += self.grad[i];
  });
}

// Multiplies each row r of z by a gate that is exactly 1 in the forward pass;
// the backward pass treats the gate as 1 + q[kept[r]] - stopgrad(q[kept[r]]),
// so query entry kept[r] receives <dL/dz_r, z_r>.
inline Tensor gate_rows_straight_through(const Tensor& z, const Tensor& query,
                                         const std::vector<std::size_t>& kept) {
  detail::require_matrix(z, "gate_rows_straight_through");
  if (z.rows() != kept.size()) throw DimensionError("gate_rows_straight_through: row count");
  const std::size_t d = z.cols();
  for (auto k : kept)
    if (k >= query.size()) throw DimensionError("gate_rows_straight_through: index range");
  return Tensor::from_op(z.shape(), z.vec(), {z, query}, [kept, d](detail::Node& self) {
    const auto& Z = detail::parent_value(self, 0);
    if (auto* gz = detail::parent_grad(self, 0))
      for (std::size_t i = 0; i < gz->size(); ++i) (*gz)[i] += self.grad[i];
    if (auto* gq = detail::parent_grad(self, 1))
      for (std::size_t r = 0; r < kept.size(); ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += self.grad[r * d + j] * Z[r * d + j];
        (*gq)[kept[r]] += acc;
      }
  });
}

inline Tensor stop_gradient(const Tensor& x) { return x.detach(); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }

}  // namespace flowmat
