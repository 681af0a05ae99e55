// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [work_dir] [criteria]
//
// `criteria` is an optional comma-separated subset, e.g. "1,2,7a".

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "flowmat/eval/experiment.hpp"
#include "flowmat/numerics/gradcheck.hpp"

using namespace flowmat;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor probe(const Tensor& y) {
  std::vector<double> w(y.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i % 7);
  return sum(mul(y, Tensor(y.shape(), std::move(w))));
}

channel::EigenMatrix random_unit_rows(std::size_t s, std::size_t n_tx, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  channel::EigenMatrix w(s, n_tx);
  for (auto& z : w.data) z = {g(rng), g(rng)};
  model::normalize_rows(w);
  return w;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  std::string worst_name;
  auto check = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> ps) {
    const double e = finite_diff_grad_check(f, std::move(ps));
    if (e >= worst) {
      worst = e;
      worst_name = name;
    }
  };

  auto a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng), c = random_tensor({5, 4}, rng);
  auto p = random_tensor({3, 4}, rng, 0.5, 2.0), v = random_tensor({4}, rng);
  auto g = random_tensor({4}, rng, 0.5, 1.5), lb = random_tensor({4}, rng);
  auto r = random_tensor({2, 4}, rng), fill = random_tensor({4}, rng);
  check("matmul", [&] { return probe(matmul(a, b)); }, {a, b});
  check("matmul_transposed", [&] { return probe(matmul_transposed(a, c)); }, {a, c});
  check("transpose", [&] { return probe(transpose(a)); }, {a});
  check("add", [&] { return probe(add(a, p)); }, {a, p});
  check("sub", [&] { return probe(sub(a, p)); }, {a, p});
  check("mul", [&] { return probe(mul(a, p)); }, {a, p});
  check("div", [&] { return probe(div(a, p)); }, {a, p});
  check("scale", [&] { return probe(scale(a, -1.7)); }, {a});
  check("add_scalar", [&] { return probe(add_scalar(a, 0.3)); }, {a});
  check("square", [&] { return probe(square(a)); }, {a});
  check("sqrt", [&] { return probe(sqrt(p)); }, {p});
  check("gelu", [&] { return probe(gelu(a)); }, {a});
  check("sum", [&] { return probe(sum(a)); }, {a});
  check("mean", [&] { return probe(mean(a)); }, {a});
  check("row_sum", [&] { return probe(row_sum(a)); }, {a});
  check("add_row_vector", [&] { return probe(add_row_vector(a, v)); }, {a, v});
  check("softmax_rows", [&] { return probe(softmax_rows(scale(a, 3.0))); }, {a});
  check("layer_norm", [&] { return probe(layer_norm(a, g, lb)); }, {a, g, lb});
  check("reshape", [&] { return probe(reshape(a, {2, 6})); }, {a});
  check("slice_cols", [&] { return probe(slice_cols(a, 1, 2)); }, {a});
  check("slice_rows", [&] { return probe(slice_rows(a, 1, 2)); }, {a});
  check("concat_cols", [&] { return probe(concat_cols({a, p})); }, {a, p});
  check("concat_rows", [&] { return probe(concat_rows({a, r})); }, {a, r});
  check("gather_rows", [&] { return probe(gather_rows(a, {2, 0, 2})); }, {a});
  check("scatter_rows", [&] { return probe(scatter_rows(r, {3, 0}, 5, fill)); }, {r, fill});

  // Attention block with a hard mask.
  {
    model::ParamStore ps;
    model::Initializer init(7);
    model::create_attention_block(ps, init, "blk", 8, 2);
    const Tensor x = random_tensor({6, 8}, rng);
    const Tensor bias = model::build_mask_bias({0, 2, 5}, 6, model::MaskMode::hard);
    auto params = ps.trainable();
    params.push_back(x);
    check("attention_block", [&] { return probe(model::attention_block(ps, "blk", x, 2, &bias)); }, params);
    model::create_mixer_block(ps, init, "mix", 6, 8, 2);
    check("mixer_block", [&] { return probe(model::mixer_block(ps, "mix", x)); }, ps.trainable({"mix."}));
  }

  // Feedback loss graph, float mode. The query only enters through the
  // straight-through gate and has no finite-difference derivative.
  {
    model::ModelConfig mc;
    mc.n_tokens = 4;
    mc.token_dim = 8;
    mc.d_model = 8;
    mc.n_heads = 1;
    mc.encoder_depth = 2;
    mc.decoder_depth = 2;
    mc.keep = 2;
    mc.d_q = 2;
    mc.quant = model::QuantScheme::none;
    model::FeedbackModel fb(mc);
    std::vector<Tensor> params;
    std::normal_distribution<double> n01(0.0, 0.1);
    for (auto& [name, t] : fb.params().entries()) {
      if (name == "query" || !t.requires_grad()) continue;
      auto vals = t.mutable_values();
      if (std::all_of(vals.begin(), vals.end(), [](double e) { return e == 0.0; }))
        for (auto& e : vals) e = n01(rng);
      params.push_back(t);
    }
    const Tensor x = fb.input_tokens(random_unit_rows(4, 4, rng));
    check("loss_cf(feedback)", [&] { return train::loss_cf(x, fb.forward(x, false).tokens); }, params);
  }

  {
    auto cb = random_tensor({8, 3}, rng);
    auto z = random_tensor({4, 3}, rng);
    quant::VqCodebook book{cb, {}, 0.25};
    const auto idx = quant::vq_assign(z, book).indices;
    // Each term is differentiated only in the argument that is not
    // stop-gradiented.
    check("vq_codebook", [&] { return quant::vq_losses(z, book, idx).codebook; }, {cb});
    check("vq_commitment", [&] { return quant::vq_losses(z, book, idx).commitment; }, {z});
  }

  // Estimation loss graph in both normalization modes.
  {
    model::ModelConfig mc;
    mc.n_tokens = 6;
    mc.token_dim = 4;
    mc.d_model = 8;
    mc.n_heads = 1;
    mc.decoder_depth = 2;
    mc.denoiser_blocks = 1;
    mc.keep = 2;
    mc.quant = model::QuantScheme::none;
    model::EstimationModel est(mc, {0, 2, 4});
    std::normal_distribution<double> n01(0.0, 0.1);
    for (auto& [name, t] : est.params().entries())
      if (name.rfind("den.out", 0) == 0 || name == "mask_token")
        for (auto& e : t.mutable_values()) e = n01(rng);
    const Tensor pilots = random_tensor({3, 4}, rng), truth = random_tensor({6, 4}, rng);
    const Tensor clean = random_tensor({3, 4}, rng);
    for (auto mode : {train::LossMode::canonical, train::LossMode::paper_literal})
      check(std::string("loss_ce(estimation, ") + train::to_string(mode) + ")", [&] {
        const auto f = est.forward(pilots);
        return add(train::loss_ce1(f.denoised, clean, mode), train::loss_ce2(f.tokens, truth, mode));
      }, est.params().trainable());
  }

  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0,
          "worst rel err " + fmt("%.2e", worst) + " (" + worst_name + "), " + fmt("%.1f s", secs)};
}

// ---------------------------------------------------------------------------

void jacobi(std::vector<double> a, std::size_t n, std::vector<double>& values, std::vector<double>& vecs) {
  vecs.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) vecs[i * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vecs[k * n + p], vkq = vecs[k * n + q];
          vecs[k * n + p] = c * vkp - s * vkq;
          vecs[k * n + q] = s * vkp + c * vkq;
        }
      }
  }
  values.resize(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a[i * n + i];
}

Outcome eigen_oracle() {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> g;
  const std::size_t n = 8;
  double worst_value = 0.0, worst_overlap = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    ComplexMatrix b(1 + trial % 8, n);
    for (std::size_t i = 0; i < b.rows; ++i)
      for (std::size_t j = 0; j < n; ++j) b.set(i, j, {g(rng), g(rng)});
    const auto h = gram(b);
    std::vector<double> emb(4 * n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const auto z = h(i, j);
        emb[i * 2 * n + j] = z.real();
        emb[i * 2 * n + n + j] = -z.imag();
        emb[(n + i) * 2 * n + j] = z.imag();
        emb[(n + i) * 2 * n + n + j] = z.real();
      }
    std::vector<double> values, vecs;
    jacobi(emb, 2 * n, values, vecs);
    const std::size_t top = std::max_element(values.begin(), values.end()) - values.begin();
    std::vector<cdouble> oracle(n);
    for (std::size_t i = 0; i < n; ++i) oracle[i] = {vecs[i * 2 * n + top], vecs[(n + i) * 2 * n + top]};
    const double on = norm2(oracle);
    for (auto& z : oracle) z /= on;
    const auto pair = hermitian_top_eigpair(h);
    worst_value = std::max(worst_value, std::abs(pair.value - values[top]) / values[top]);
    worst_overlap = std::max(worst_overlap, 1.0 - std::abs(inner(oracle, pair.vector)));
  }
  return {worst_value < 1e-8 && worst_overlap < 1e-8,
          "200 matrices, worst eigenvalue rel err " + fmt("%.2e", worst_value) + ", worst 1-|<v,v*>| " +
              fmt("%.2e", worst_overlap)};
}

// ---------------------------------------------------------------------------

Outcome ls_noise_law() {
  channel::SystemGeometry geom;
  geom.n_tx = 8;
  geom.n_rx = 2;
  geom.n_sub = 52;
  geom.n_subband = 13;
  geom.subcarrier_spacing = 120e3;
  geom.pilot_pattern = train::parse_pilot_pattern("comb:4", geom.n_sub);
  bool ok = true;
  std::string detail;
  for (double snr : {0.0, 10.0, 20.0}) {
    eval::NmseAccumulator acc;
    for (std::uint64_t i = 0; i < 10000; ++i) {
      channel::MultipathProfile prof;
      prof.seed = train::derive_seed(303, train::kStreamChannel, i);
      const auto h = channel::generate_channel(geom, prof);
      const auto obs = channel::observe_pilots(h, geom, snr, train::derive_seed(303, train::kStreamNoise, i));
      acc.add(channel::ls_estimate(obs).values, channel::restrict_to_pilots(h, obs.pilot_indices).values);
    }
    const double db = acc.db();
    ok = ok && std::abs(db + snr) <= 0.3;
    detail += (detail.empty() ? "" : ", ") + fmt("SNR %g: ", snr) + fmt("%.3f dB", db);
  }
  return {ok, "10^4 trials each; " + detail};
}

// ---------------------------------------------------------------------------

// Scalar single-head attention over the keys in `cols` with a per-key bias.
std::vector<double> brute_attention(const model::ParamStore& ps, const Tensor& x, const std::vector<double>& bias,
                                    const std::vector<std::size_t>& cols) {
  const std::size_t n = x.rows(), d = x.cols();
  auto proj = [&](const Tensor& w) {
    std::vector<double> out(n * d, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c)
        for (std::size_t i = 0; i < d; ++i) out[r * d + c] += x.at(r, i) * w.at(i, c);
    return out;
  };
  const auto q = proj(ps.get("b.attn.wq")), k = proj(ps.get("b.attn.wk")), v = proj(ps.get("b.attn.wv"));
  const Tensor& wo = ps.get("b.attn.out.w");
  const Tensor& bo = ps.get("b.attn.out.b");
  std::vector<double> out(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> w;
    for (auto h : cols) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += q[r * d + i] * k[h * d + i];
      w.push_back((s + bias[h]) / std::sqrt(static_cast<double>(d)));
    }
    const double mx = *std::max_element(w.begin(), w.end());
    double z = 0.0;
    for (auto& e : w) z += (e = std::exp(e - mx));
    std::vector<double> mixed(d, 0.0);
    for (std::size_t j = 0; j < cols.size(); ++j)
      for (std::size_t i = 0; i < d; ++i) mixed[i] += w[j] / z * v[cols[j] * d + i];
    for (std::size_t c = 0; c < d; ++c) {
      double s = bo[c];
      for (std::size_t i = 0; i < d; ++i) s += mixed[i] * wo.at(i, c);
      out[r * d + c] = s;
    }
  }
  return out;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Outcome mask_correctness() {
  const std::size_t n = 6, d = 4;
  model::ParamStore ps;
  model::Initializer init(404);
  model::create_attention_block(ps, init, "b", d, 2);
  std::mt19937_64 rng(405);
  std::normal_distribution<double> g;
  for (auto& e : ps.get("b.attn.out.b").mutable_values()) e = 0.3 * g(rng);
  std::vector<double> xv(n * d);
  for (auto& e : xv) e = g(rng);
  const Tensor x({n, d}, xv);

  double worst = 0.0;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) kept.push_back(i);
    const Tensor bias = model::build_mask_bias(kept, n, model::MaskMode::hard);
    const Tensor y = model::multi_head_attention(ps, "b", x, 1, &bias);
    worst = std::max(worst, max_abs_diff(y.values(), brute_attention(ps, x, std::vector<double>(n, 0.0), kept)));
  }

  // paper_literal with kept = {0}: the output is attention on logits + {1,0,..}
  // and the masked keys keep most of the weight.
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  const Tensor soft = model::build_mask_bias({0}, n, model::MaskMode::paper_literal);
  std::vector<Tensor> weights;
  const Tensor ys = model::multi_head_attention(ps, "b", x, 1, &soft, &weights);
  std::vector<double> literal_bias(n, 0.0);
  literal_bias[0] = 1.0;
  const double literal_diff = max_abs_diff(ys.values(), brute_attention(ps, x, literal_bias, all));
  double min_masked_weight = 1.0;
  for (std::size_t r = 0; r < n; ++r) {
    double w = 0.0;
    for (std::size_t h = 1; h < n; ++h) w += weights[0].at(r, h);
    min_masked_weight = std::min(min_masked_weight, w);
  }
  const Tensor plain = model::multi_head_attention(ps, "b", x, 1, nullptr);
  const double vs_plain = max_abs_diff(ys.values(), plain.values());

  const bool ok = worst < 1e-10 && literal_diff < 1e-10 && min_masked_weight > 0.1 && vs_plain > 0.0;
  return {ok, "63 splits, worst |hard - brute| " + fmt("%.2e", worst) + "; paper_literal |out - brute(+bias)| " +
                  fmt("%.2e", literal_diff) + ", masked keys keep >= " + fmt("%.3f", min_masked_weight) +
                  " of the weight"};
}

// ---------------------------------------------------------------------------

Outcome quantizer_suite() {
  std::mt19937_64 rng(505);
  bool ok = true;
  double worst_ratio = 0.0;
  for (unsigned bits : {1u, 2u, 4u, 8u}) {
    const quant::UniformQuantizerSpec spec{bits, -1.3, 2.1};
    std::uniform_real_distribution<double> u(spec.lo, spec.hi);
    std::vector<double> xs(100000);
    for (auto& e : xs) e = u(rng);
    const auto back = quant::uniform_dequantize(quant::uniform_quantize(xs, spec).indices, spec);
    for (std::size_t i = 0; i < xs.size(); ++i)
      worst_ratio = std::max(worst_ratio, std::abs(xs[i] - back[i]) / (spec.step() / 2.0));
  }
  ok = ok && worst_ratio <= 1.0 + 1e-9;

  // Bit budgets: uniform m d_q B and VQ m log2 K, both through the formula
  // and through an actual payload.
  struct Row { std::size_t m, dq; unsigned b; std::size_t budget; };
  std::string bits_detail;
  for (const Row& row : {Row{8, 4, 2, 64}, Row{8, 8, 2, 128}, Row{8, 8, 4, 256}, Row{4, 8, 2, 64},
                         Row{4, 16, 2, 128}, Row{4, 16, 4, 256}}) {
    std::vector<double> latent(row.m * row.dq, 0.1);
    const auto q = quant::uniform_quantize(latent, {row.b, -1.0, 1.0});
    ok = ok && quant::payload_bits_uniform(row.m, row.dq, row.b) == row.budget && q.payload.bit_length == row.budget;
  }
  for (auto [m, budget] : {std::pair<std::size_t, std::size_t>{8, 64}, {16, 128}, {32, 256}}) {
    quant::VqCodebook book{Tensor::zeros({256, 4}), {}, 0.25};
    const auto a = quant::vq_assign(Tensor::zeros({m, 4}), book);
    ok = ok && quant::payload_bits_vq(m, 256) == budget && a.payload.bit_length == budget;
  }
  {
    model::ModelConfig mc;
    mc.n_tokens = 13;
    mc.token_dim = 16;
    mc.d_model = 16;
    mc.keep = 8;
    for (auto [budget, b] : {std::pair<std::uint64_t, std::uint64_t>{64, 2}, {128, 2}, {256, 4}}) {
      model::FeedbackModel fb(eval::with_budget(mc, budget, b));
      ok = ok && fb.compress(random_unit_rows(13, 8, rng)).bit_length == budget;
    }
  }

  // VQ assignment against brute force.
  std::size_t mismatches = 0;
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 64, d = 4, m = 200;
    std::vector<double> cb(k * d), xs(m * d);
    for (auto& e : cb) e = g(rng);
    for (auto& e : xs) e = g(rng);
    quant::VqCodebook book{Tensor({k, d}, cb), {}, 0.25};
    const auto a = quant::vq_assign(Tensor({m, d}, xs), book);
    for (std::size_t r = 0; r < m; ++r) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += (xs[r * d + c] - cb[j * d + c]) * (xs[r * d + c] - cb[j * d + c]);
        if (s < best_d) {
          best_d = s;
          best = j;
        }
      }
      mismatches += a.indices[r] != best;
    }
  }
  ok = ok && mismatches == 0;
  return {ok, "worst |x - deq(q(x))| / (step/2) = " + fmt("%.6f", worst_ratio) +
                  " over 4x10^5 values; 64/128/256-bit uniform and VQ payloads exact; VQ brute-force mismatches " +
                  std::to_string(mismatches) + "/4000"};
}

// ---------------------------------------------------------------------------

Outcome metric_identities() {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> g;
  channel::ChannelTensor h(2, 8, 4);
  for (auto& z : h.data) z = {g(rng), g(rng)};
  const channel::ChannelTensor zero(2, 8, 4);
  auto doubled = h;
  for (auto& z : doubled.data) z *= 2.0;
  const double nmse_zero = eval::nmse_db(zero, h), nmse_double = eval::nmse_db(doubled, h);

  const auto w = random_unit_rows(13, 8, rng);
  auto rotated = w;
  for (auto& z : rotated.data) z *= std::polar(1.0, 2.1);
  const double rho_phase = eval::rho(w, rotated);
  channel::EigenMatrix a(2, 2), b(2, 2);
  a(0, 0) = 1.0;
  b(0, 1) = 1.0;
  a(1, 0) = cdouble(1.0, 1.0);
  a(1, 1) = cdouble(1.0, -1.0);
  b(1, 0) = cdouble(1.0, 1.0);
  b(1, 1) = cdouble(-1.0, 1.0);
  const double rho_orth = eval::rho(a, b);
  const bool ok = nmse_zero == 0.0 && nmse_double == 0.0 && std::abs(rho_phase - 1.0) <= 1e-15 && rho_orth == 0.0 &&
                  eval::rho(w, w) == 1.0;
  return {ok, "nmse(0)=" + fmt("%g dB", nmse_zero) + ", nmse(2h)=" + fmt("%g dB", nmse_double) +
                  ", rho(global phase)=" + fmt("%.17g", rho_phase) + ", rho(orthogonal)=" + fmt("%g", rho_orth)};
}

// ---------------------------------------------------------------------------

Outcome overfit_feedback() {
  const auto t0 = std::chrono::steady_clock::now();
  train::DataConfig dc;
  dc.n_samples = 32;
  dc.seed = 707;
  const auto d = train::generate_dataset(dc);
  model::ModelConfig mc;
  mc.n_tokens = dc.geom.n_subband;
  mc.token_dim = 2 * dc.geom.n_tx;
  mc.keep = mc.n_tokens / 2;
  mc.d_q = 16;
  mc.quant = model::QuantScheme::none;
  model::FeedbackModel fb(mc);
  train::TrainConfig tc;
  tc.steps = 3000;
  tc.seed = 707;
  train::train_feedback(fb, d.eigens, {}, tc);
  std::vector<channel::EigenMatrix> rec;
  for (const auto& w : d.eigens) rec.push_back(fb.reconstruct_float(w));
  const double r = eval::rho(d.eigens, rec);
  const double secs = seconds_since(t0);
  return {r > 0.99 && secs < 300.0, "train Rho " + fmt("%.5f", r) + " after 3000 steps, m = " +
                                        std::to_string(mc.keep) + " of " + std::to_string(mc.n_tokens) + ", " +
                                        fmt("%.0f s", secs)};
}

Outcome overfit_estimation() {
  const auto t0 = std::chrono::steady_clock::now();
  train::DataConfig dc;
  dc.geom.n_tx = 8;
  dc.geom.n_rx = 2;
  dc.geom.n_sub = 16;
  dc.geom.n_subband = 4;
  dc.pilots = "comb:2";
  dc.geom.pilot_pattern = train::parse_pilot_pattern(dc.pilots, dc.geom.n_sub);
  dc.n_samples = 128;
  const auto d = train::generate_dataset(dc);
  model::ModelConfig mc;
  mc.n_tokens = dc.geom.n_sub;
  mc.token_dim = 2 * dc.geom.n_rx * dc.geom.n_tx;
  mc.quant = model::QuantScheme::none;
  model::EstimationModel est(mc, dc.geom.pilot_pattern.pilot_indices);
  train::TrainConfig tc;
  tc.steps = 1000;
  tc.steps_phase2 = 1500;
  tc.snr_min = tc.snr_max = tc.eval_snr = 10.0;
  const auto rep = train::train_estimation(est, d.slice(0, 64), d.slice(64, 128), tc);
  const double model_db = rep.metrics.at("nmse_db"), ls_db = rep.metrics.at("ls_nmse_db");
  return {ls_db - model_db >= 2.0, "held-out NMSE " + fmt("%.2f dB", model_db) + " vs LS+interp " +
                                       fmt("%.2f dB", ls_db) + " (gain " + fmt("%.2f dB", ls_db - model_db) + "), " +
                                       fmt("%.0f s", seconds_since(t0))};
}

// ---------------------------------------------------------------------------

Outcome budget_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  KeyValues kv = KeyValues::parse(
      "seed = 808\n"
      "geom.n_tx = 32\ngeom.n_rx = 4\ngeom.n_sub = 52\ngeom.n_subband = 13\n"
      "geom.subcarrier_spacing = 120000\ngeom.pilots = all\n"
      "data.n_samples = 4000\ndata.test_fraction = 0.05\n"
      "model.keep = 4\n"
      "train.steps = 6000\ntrain.lr = 0.001\n");
  const auto dc = eval::data_config(kv);
  const auto tc = train::TrainConfig::from_key_values(kv);
  const auto data = eval::split_dataset(train::generate_dataset(dc), dc.test_fraction);
  const eval::EvalContext ctx{"", tc.seed, eval::config_hash(kv)};
  const std::vector<std::pair<std::uint64_t, std::uint64_t>> budgets{{64, 2}, {128, 2}, {256, 4}};
  std::vector<double> rhos;
  bool beats = true;
  std::string detail;
  for (auto [budget, bits] : budgets) {
    model::FeedbackModel fb(eval::with_budget(eval::feedback_model_config(kv, data.all.geom), budget, bits));
    train::train_feedback(fb, data.train_set.eigens, data.test_set.eigens, tc);
    const auto row = eval::feedback_row(fb, data.test_set.eigens, ctx);
    rhos.push_back(*row.rho);
    beats = beats && *row.rho > *row.rho_truncation;
    detail += (detail.empty() ? "" : "; ") + std::to_string(budget) + " bit: Rho " + fmt("%.4f", *row.rho) +
              " vs truncation " + fmt("%.4f", *row.rho_truncation);
    std::printf("  [8] %zu bit done: Rho %.4f, truncation %.4f (%.0f s)\n", static_cast<std::size_t>(budget),
                *row.rho, *row.rho_truncation, seconds_since(t0));
    std::fflush(stdout);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < rhos.size(); ++i) monotone = monotone && rhos[i] >= rhos[i - 1] - 0.01;
  return {beats && monotone, detail + fmt(", %.0f s", seconds_since(t0))};
}

// ---------------------------------------------------------------------------

Outcome correlation_shape() {
  train::DataConfig dc;
  bool ok = true;
  std::string detail;
  for (std::size_t paths : {1u, 2u, 3u}) {
    double off = 0.0, asym = 0.0, diag = 0.0;
    const std::size_t samples = 10;
    for (std::size_t i = 0; i < samples; ++i) {
      auto prof = dc.profile;
      prof.n_paths = paths;
      prof.seed = train::derive_seed(909, train::kStreamChannel, i);
      const auto c = eval::freq_correlation(channel::generate_channel(dc.geom, prof));
      off += eval::mean_off_diagonal(c) / static_cast<double>(samples);
      for (std::size_t a = 0; a < c.size(); ++a) {
        diag = std::max(diag, std::abs(c[a][a] - 1.0));
        for (std::size_t b = 0; b < c.size(); ++b) asym = std::max(asym, std::abs(c[a][b] - c[b][a]));
      }
    }
    ok = ok && asym == 0.0 && diag == 0.0 && off > 0.5 && (paths != 1 || std::abs(off - 1.0) < 1e-9);
    detail += (detail.empty() ? "" : ", ") + ("L=" + std::to_string(paths) + " mean off-diagonal ") + fmt("%.4f", off);
  }
  return {ok, detail + " (" + std::to_string(dc.geom.n_sub) + " subcarriers, symmetric, unit diagonal)"};
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

template <class Fn>
bool rejects(Fn&& fn) {
  try {
    fn();
  } catch (const FormatError&) {
    return true;
  }
  return false;
}

Outcome determinism_io(const fs::path& work) {
  const std::string cfg =
      "seed = 1010\ngeom.n_tx = 8\ngeom.n_rx = 2\ngeom.n_sub = 52\ngeom.n_subband = 13\n"
      "geom.subcarrier_spacing = 120000\ngeom.pilots = comb:4\ndata.n_samples = 40\ndata.test_fraction = 0.2\n"
      "model.d_model = 16\nmodel.keep = 4\ntrain.steps = 30\ntrain.steps_phase2 = 20\ntrain.steps_e2e = 10\n"
      "eval.task = joint\ntrain.regime = end_to_end\neval.budgets = 64,128\neval.budget_bits = 2,4\n";
  const auto a = work / "det_a", b = work / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  eval::run_experiment(KeyValues::parse(cfg), a);
  eval::run_experiment(KeyValues::parse(cfg), b);
  std::size_t compared = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file() || entry.path().filename() == "timing.txt") continue;
    ++compared;
    differing += slurp(entry.path()) != slurp(b / fs::relative(entry.path(), a));
  }

  // Dataset and checkpoint files round-trip byte for byte.
  const auto data_dir = a / "data";
  const auto dc = eval::data_config(KeyValues::parse(cfg));
  const auto loaded = train::load_dataset(data_dir.string(), dc);
  const auto copy = work / "data_copy";
  fs::create_directories(copy);
  train::save_dataset(copy.string(), loaded);
  bool roundtrip = slurp(train::channels_file(data_dir.string())) == slurp(train::channels_file(copy.string())) &&
                   slurp(train::eigen_file(data_dir.string())) == slurp(train::eigen_file(copy.string()));
  const auto ck_path = a / "feedback_b64.fmw";
  const auto fb = model::feedback_from_checkpoint(model::load_checkpoint(ck_path.string()));
  roundtrip = roundtrip && model::encode_checkpoint(model::make_checkpoint(fb)) == io::read_file(ck_path.string());
  const auto est = model::estimation_from_checkpoint(model::load_checkpoint((a / "estimation_b64.fmw").string()));
  roundtrip = roundtrip &&
              model::encode_checkpoint(model::make_checkpoint(est)) == io::read_file((a / "estimation_b64.fmw").string());

  // Corrupted headers and CRCs are rejected.
  const auto ds = io::read_file(train::channels_file(data_dir.string()));
  const auto ck = io::read_file(ck_path.string());
  std::size_t rejected = 0, cases = 0;
  auto expect_reject = [&](bool r) {
    ++cases;
    rejected += r;
  };
  for (std::size_t pos : {std::size_t{0}, std::size_t{4}, std::size_t{8}, ds.size() / 2, ds.size() - 1}) {
    auto bad = ds;
    bad[pos] ^= 0x5A;
    expect_reject(rejects([&] { channel::decode_records(bad); }));
  }
  for (std::size_t pos : {std::size_t{0}, std::size_t{4}, ck.size() / 2, ck.size() - 1}) {
    auto bad = ck;
    bad[pos] ^= 0x5A;
    expect_reject(rejects([&] { model::decode_checkpoint(bad); }));
  }
  expect_reject(rejects([&] { channel::decode_records(std::span(ds).first(ds.size() - 3)); }));
  expect_reject(rejects([&] { model::decode_checkpoint(std::span(ck).first(ck.size() - 3)); }));

  const bool ok = differing == 0 && compared > 0 && roundtrip && rejected == cases;
  return {ok, std::to_string(compared - differing) + "/" + std::to_string(compared) +
                  " report files identical across runs; round trips " + (roundtrip ? "exact" : "NOT exact") +
                  "; corruptions rejected " + std::to_string(rejected) + "/" + std::to_string(cases)};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? argv[1] : "acceptance_work";
  std::set<std::string> only;
  if (argc > 2) {
    std::stringstream ss(argv[2]);
    for (std::string item; std::getline(ss, item, ',');) only.insert(item);
  }
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::pair<std::string, std::function<Outcome()>>>> criteria{
      {"1", {"gradient suite", gradient_suite}},
      {"2", {"eigensolver oracle", eigen_oracle}},
      {"3", {"LS noise law", ls_noise_law}},
      {"4", {"mask correctness", mask_correctness}},
      {"5", {"quantizer suite", quantizer_suite}},
      {"6", {"metric identities", metric_identities}},
      {"7a", {"feedback overfit", overfit_feedback}},
      {"7b", {"estimation overfit", overfit_estimation}},
      {"8", {"bit-budget trend", budget_trend}},
      {"9", {"frequency correlation", correlation_shape}},
      {"10", {"determinism and I/O", [&] { return determinism_io(work); }}},
  };

  int failed = 0;
  for (const auto& [id, named] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = named.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %-3s %-22s %s\n", o.pass ? "PASS" : "FAIL", id.c_str(), named.first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
