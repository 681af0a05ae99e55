/**
 * @file mask.hpp
 * @brief Active masking: top-K query selection, the attention-logit bias M'
 *        and mask-token insertion.
 */
#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "flowmat/model/config.hpp"
#include "flowmat/numerics/ops.hpp"

namespace flowmat::model {

struct MaskPlan {
  Tensor query;                        // [N]
  std::vector<std::size_t> kept_indices;    // ascending, size m
  std::vector<std::size_t> masked_indices;  // ascending complement
  Tensor bias;                         // [N x N] encoder-side bias
};

// Indices of the m largest entries, ties toward the lower index, returned in
// ascending index order.
inline std::vector<std::size_t> top_k_indices(std::span<const double> query, std::size_t m) {
  if (m < 1 || m > query.size()) throw ValidationError("keep count out of range");
  std::vector<std::size_t> order(query.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return query[a] > query[b]; });
  order.resize(m);
  std::sort(order.begin(), order.end());
  return order;
}

inline std::vector<std::size_t> complement(const std::vector<std::size_t>& kept, std::size_t n) {
  std::vector<bool> is_kept(n, false);
  for (auto k : kept) is_kept.at(k) = true;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (!is_kept[i]) out.push_back(i);
  return out;
}

// Column h of every row holds the bias for key h.
//   paper_literal: 1 if h is kept, 0 if masked.
//   hard:          0 if h is kept, -1e9 if masked.
inline Tensor build_mask_bias(const std::vector<std::size_t>& kept, std::size_t n, MaskMode mode) {
  std::vector<double> col(n, mode == MaskMode::hard ? kHardMaskBias : 0.0);
  for (auto k : kept) {
    if (k >= n) throw ValidationError("kept index out of range");
    col[k] = mode == MaskMode::hard ? 0.0 : 1.0;
  }
  std::vector<double> v(n * n);
  for (std::size_t r = 0; r < n; ++r) std::copy(col.begin(), col.end(), v.begin() + r * n);
  return Tensor({n, n}, std::move(v));
}

// Bias for the decoder's first block: the encoder bias negated in
// paper_literal mode, the same hard mask otherwise.
inline Tensor build_decoder_bias(const std::vector<std::size_t>& kept, std::size_t n,
                                 MaskMode mode) {
  Tensor b = build_mask_bias(kept, n, mode);
  if (mode == MaskMode::paper_literal)
    for (auto& x : b.mutable_values()) x = -x;
  return b;
}

inline MaskPlan make_mask_plan(const Tensor& query, std::size_t m, MaskMode mode) {
  MaskPlan plan;
  plan.query = query;
  plan.kept_indices = top_k_indices(query.values(), m);
  plan.masked_indices = complement(plan.kept_indices, query.size());
  plan.bias = build_mask_bias(plan.kept_indices, query.size(), mode);
  return plan;
}

struct ActiveSelection {
  Tensor z_part;  // [m x d]
  std::vector<std::size_t> kept_indices;
};

// Gathers the rows of z at the query's top-m positions. With a trainable
// query the rows pass through a straight-through gate so the query receives
// gradient from the downstream loss; the forward values are unchanged.
inline ActiveSelection select_active(const Tensor& z, const Tensor& query, std::size_t m) {
  if (z.dim() != 2 || query.size() != z.rows())
    throw DimensionError("select_active: query length must equal token count");
  ActiveSelection out;
  out.kept_indices = top_k_indices(query.values(), m);
  out.z_part = gather_rows(z, out.kept_indices);
  if (query.requires_grad())
    out.z_part = gate_rows_straight_through(out.z_part, query, out.kept_indices);
  return out;
}

// Row i of the result is z_part's row for kept index i, else the shared mask
// token.
inline Tensor insert_mask_tokens(const Tensor& z_part, const std::vector<std::size_t>& kept,
                                 std::size_t n, const Tensor& mask_token) {
  return scatter_rows(z_part, kept, n, mask_token);
}

// Evenly spread placement positions for reductions that do not pick rows.
inline std::vector<std::size_t> spread_positions(std::size_t n, std::size_t m) {
  std::vector<std::size_t> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = i * n / m;
  return out;
}

// Averages contiguous groups: group g covers [g n / m, (g + 1) n / m).
inline Tensor group_merge(const Tensor& z, std::size_t m) {
  const std::size_t n = z.rows();
  std::vector<Tensor> rows;
  for (std::size_t g = 0; g < m; ++g) {
    const std::size_t b = g * n / m, e = (g + 1) * n / m;
    const Tensor block = slice_rows(z, b, e - b);
    const Tensor ones = Tensor::full({1, e - b}, 1.0 / static_cast<double>(e - b));
    rows.push_back(matmul(ones, block));
  }
  return concat_rows(rows);
}

}  // namespace flowmat::model
