/**
 * @file quantizer.hpp
 * @brief Uniform and vector quantization of the kept latent, straight-through
 *        training forms, bit packing and the feedback payload wire format.
 *
 * Wire format (little-endian):
 *   scheme tag u8 | params | bit length u32 | packed bits, MSB-first
 * where params is (B u8, lo f64, hi f64) for uniform and (K u32) for VQ.
 */
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "flowmat/common/binary_io.hpp"
#include "flowmat/numerics/ops.hpp"

namespace flowmat::quant {

enum class Scheme : std::uint8_t { uniform = 0, vq = 1 };

struct UniformQuantizerSpec {
  unsigned bits = 2;
  double lo = -1.0;
  double hi = 1.0;

  void validate() const {
    if (bits < 1 || bits > 16) throw ValidationError("uniform quantizer bits must be in [1, 16]");
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
      throw ValidationError("uniform quantizer needs finite lo < hi");
  }
  std::uint32_t levels() const { return std::uint32_t{1} << bits; }
  double step() const { return (hi - lo) / static_cast<double>(levels()); }
};

// Range covering [min, max] of `samples`, widened by `margin` of the span on
// each side.
inline UniformQuantizerSpec calibrate_range(std::span<const double> samples, unsigned bits,
                                            double margin = 0.05) {
  if (samples.empty()) throw ValidationError("calibration needs samples");
  auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  double lo = *mn, hi = *mx;
  double span = hi - lo;
  if (span <= 0.0) span = std::max(1e-6, std::abs(lo));
  lo -= margin * span;
  hi += margin * span;
  UniformQuantizerSpec spec{bits, lo, hi};
  spec.validate();
  return spec;
}

struct BitPayload {
  Scheme scheme = Scheme::uniform;
  UniformQuantizerSpec uniform;       // meaningful for Scheme::uniform
  std::uint32_t codebook_size = 0;    // meaningful for Scheme::vq
  std::uint32_t bit_length = 0;
  std::vector<std::uint8_t> bytes;    // ceil(bit_length / 8), pad bits zero
};

// ---------------------------------------------------------------------------
// Bit accounting

inline bool is_power_of_two(std::uint64_t k) { return k != 0 && (k & (k - 1)) == 0; }

inline unsigned log2_exact(std::uint64_t k) {
  if (!is_power_of_two(k)) throw ValidationError("codebook size must be a power of two");
  return static_cast<unsigned>(std::countr_zero(k));
}

inline std::size_t payload_bits_uniform(std::size_t m, std::size_t d_q, unsigned bits) {
  if (bits < 1 || bits > 16) throw ValidationError("uniform quantizer bits must be in [1, 16]");
  return m * d_q * bits;
}

inline std::size_t payload_bits_vq(std::size_t m, std::uint64_t codebook_size) {
  return m * log2_exact(codebook_size);
}

// ---------------------------------------------------------------------------
// Bit packing

inline std::vector<std::uint8_t> pack_bits(std::span<const std::uint32_t> indices, unsigned width) {
  const std::size_t total = indices.size() * width;
  std::vector<std::uint8_t> out((total + 7) / 8, 0);
  std::size_t bit = 0;
  for (auto idx : indices) {
    if (width < 32 && (idx >> width) != 0) throw ValidationError("index does not fit its bit width");
    for (unsigned b = width; b-- > 0; ++bit)
      if ((idx >> b) & 1u) out[bit / 8] |= static_cast<std::uint8_t>(0x80u >> (bit % 8));
  }
  return out;
}

inline std::vector<std::uint32_t> unpack_bits(std::span<const std::uint8_t> bytes, unsigned width,
                                              std::size_t count) {
  if (bytes.size() * 8 < count * width) throw FormatError("payload shorter than its index count");
  std::vector<std::uint32_t> out(count, 0);
  std::size_t bit = 0;
  for (std::size_t i = 0; i < count; ++i)
    for (unsigned b = 0; b < width; ++b, ++bit)
      out[i] = (out[i] << 1) | ((bytes[bit / 8] >> (7 - bit % 8)) & 1u);
  return out;
}

// ---------------------------------------------------------------------------
// Uniform (mid-rise) quantizer

inline std::uint32_t uniform_index(double x, const UniformQuantizerSpec& spec) {
  const double cell = std::floor((x - spec.lo) / spec.step());
  const double top = static_cast<double>(spec.levels() - 1);
  return static_cast<std::uint32_t>(std::clamp(cell, 0.0, top));
}

inline double uniform_value(std::uint32_t index, const UniformQuantizerSpec& spec) {
  if (index >= spec.levels()) throw ValidationError("quantizer index overflow");
  return spec.lo + (static_cast<double>(index) + 0.5) * spec.step();
}

struct UniformQuantized {
  std::vector<std::uint32_t> indices;
  BitPayload payload;
};

inline UniformQuantized uniform_quantize(std::span<const double> x, const UniformQuantizerSpec& spec) {
  spec.validate();
  UniformQuantized out;
  out.indices.reserve(x.size());
  for (double v : x) out.indices.push_back(uniform_index(v, spec));
  out.payload.scheme = Scheme::uniform;
  out.payload.uniform = spec;
  out.payload.bit_length = static_cast<std::uint32_t>(x.size() * spec.bits);
  out.payload.bytes = pack_bits(out.indices, spec.bits);
  return out;
}

inline std::vector<double> uniform_dequantize(std::span<const std::uint32_t> indices,
                                              const UniformQuantizerSpec& spec) {
  spec.validate();
  std::vector<double> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(uniform_value(i, spec));
  return out;
}

// Forward: dequantized values. Backward: identity.
inline Tensor uniform_straight_through(const Tensor& x, const UniformQuantizerSpec& spec) {
  const auto q = uniform_quantize(x.values(), spec);
  return straight_through(x, uniform_dequantize(q.indices, spec));
}

// ---------------------------------------------------------------------------
// Vector quantizer

struct VqCodebook {
  Tensor vectors;                      // [K x d_q], trainable
  std::vector<std::uint64_t> usage;    // assignment counts
  double beta = 0.25;                  // commitment weight

  std::size_t size() const { return vectors.rows(); }
  std::size_t dim() const { return vectors.cols(); }
  void validate() const {
    if (!vectors.defined() || vectors.dim() != 2 || vectors.rows() == 0)
      throw ValidationError("codebook is empty");
    log2_exact(vectors.rows());
  }
};

struct VqAssignment {
  std::vector<std::uint32_t> indices;
  BitPayload payload;
};

// Nearest codeword by squared Euclidean distance, ties to the lower index.
inline VqAssignment vq_assign(const Tensor& x, VqCodebook& codebook) {
  codebook.validate();
  if (x.dim() != 2 || x.cols() != codebook.dim()) throw DimensionError("vq_assign: width mismatch");
  const std::size_t m = x.rows(), d = x.cols(), k = codebook.size();
  if (codebook.usage.size() != k) codebook.usage.assign(k, 0);
  VqAssignment out;
  const auto& E = codebook.vectors.values();
  for (std::size_t r = 0; r < m; ++r) {
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      double dist = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = x[r * d + c] - E[j * d + c];
        dist += diff * diff;
      }
      if (dist < best_d) {
        best_d = dist;
        best = static_cast<std::uint32_t>(j);
      }
    }
    out.indices.push_back(best);
    ++codebook.usage[best];
  }
  const unsigned width = log2_exact(k);
  out.payload.scheme = Scheme::vq;
  out.payload.codebook_size = static_cast<std::uint32_t>(k);
  out.payload.bit_length = static_cast<std::uint32_t>(m * width);
  out.payload.bytes = pack_bits(out.indices, width);
  return out;
}

// Codewords for the given indices, as constants.
inline std::vector<double> vq_lookup(const VqCodebook& codebook,
                                     std::span<const std::uint32_t> indices) {
  const std::size_t d = codebook.dim();
  std::vector<double> out;
  out.reserve(indices.size() * d);
  for (auto i : indices) {
    if (i >= codebook.size()) throw ValidationError("codebook index overflow");
    for (std::size_t c = 0; c < d; ++c) out.push_back(codebook.vectors[i * d + c]);
  }
  return out;
}

// Forward: assigned codewords. Backward: identity into x.
inline Tensor vq_straight_through(const Tensor& x, const VqCodebook& codebook,
                                  std::span<const std::uint32_t> indices) {
  return straight_through(x, vq_lookup(codebook, indices));
}

struct VqLosses {
  Tensor codebook;     // mean_r ||sg(x_r) - e_r||^2, trains the codebook
  Tensor commitment;   // beta * mean_r ||x_r - sg(e_r)||^2, trains the encoder
};

inline VqLosses vq_losses(const Tensor& x, const VqCodebook& codebook,
                          const std::vector<std::uint32_t>& indices) {
  if (x.rows() != indices.size()) throw DimensionError("vq_losses: row/index count mismatch");
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const Tensor e = gather_rows(codebook.vectors, idx);
  const double inv_m = 1.0 / static_cast<double>(x.rows());
  VqLosses out;
  out.codebook = scale(sum(square(sub(stop_gradient(x), e))), inv_m);
  out.commitment = scale(sum(square(sub(x, stop_gradient(e)))), codebook.beta * inv_m);
  return out;
}

// ---------------------------------------------------------------------------
// Wire format

inline std::vector<std::uint8_t> encode_payload(const BitPayload& p) {
  if (p.bytes.size() != (static_cast<std::size_t>(p.bit_length) + 7) / 8)
    throw ValidationError("payload byte count does not match bit length");
  io::Writer w;
  w.put(static_cast<std::uint8_t>(p.scheme));
  if (p.scheme == Scheme::uniform) {
    w.put(static_cast<std::uint8_t>(p.uniform.bits));
    w.put(p.uniform.lo);
    w.put(p.uniform.hi);
  } else {
    w.put(p.codebook_size);
  }
  w.put(p.bit_length);
  w.put_bytes(p.bytes);
  return std::move(w.bytes());
}

inline BitPayload decode_payload(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  BitPayload p;
  const auto tag = r.get<std::uint8_t>();
  if (tag > 1) throw FormatError("unknown payload scheme tag");
  p.scheme = static_cast<Scheme>(tag);
  if (p.scheme == Scheme::uniform) {
    p.uniform.bits = r.get<std::uint8_t>();
    p.uniform.lo = r.get<double>();
    p.uniform.hi = r.get<double>();
    try {
      p.uniform.validate();
    } catch (const ValidationError& e) {
      throw FormatError(std::string("bad uniform parameters: ") + e.what());
    }
  } else {
    p.codebook_size = r.get<std::uint32_t>();
    if (!is_power_of_two(p.codebook_size)) throw FormatError("codebook size not a power of two");
  }
  p.bit_length = r.get<std::uint32_t>();
  const std::size_t nbytes = (static_cast<std::size_t>(p.bit_length) + 7) / 8;
  if (r.remaining() != nbytes) throw FormatError("payload length does not match bit length");
  const auto body = r.get_bytes(nbytes);
  p.bytes.assign(body.begin(), body.end());
  if (p.bit_length % 8 != 0) {
    const std::uint8_t pad_mask = static_cast<std::uint8_t>(0xFFu >> (p.bit_length % 8));
    if (p.bytes.back() & pad_mask) throw FormatError("nonzero pad bits");
  }
  return p;
}

}  // namespace flowmat::quant
