/**
 * @file dataset_io.hpp
 * @brief "FMC1" sample container for channels, eigen-precoders and pilots.
 *
 * Layout (little-endian):
 *   magic "FMC1" | version u32 | kind u8 | dim count u8 | dims u32[] |
 *   sample count u64 | samples x (re, im interleaved float32, row-major) |
 *   CRC32 of the sample payload (u32)
 *
 * Per-sample dims by kind: channel [rx, tx, subcarrier], eigen
 * [tx, subband], pilot [rx, pilot, tx]. Values are stored as float32, so a
 * round trip is exact for float32-representable data.
 */
#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "flowmat/channel/generator.hpp"
#include "flowmat/channel/types.hpp"
#include "flowmat/common/binary_io.hpp"

namespace flowmat::channel {

enum class RecordKind : std::uint8_t { channel = 0, eigen = 1, pilot = 2 };

inline constexpr char kDatasetMagic[4] = {'F', 'M', 'C', '1'};
inline constexpr std::uint32_t kDatasetVersion = 1;

struct RecordSet {
  RecordKind kind = RecordKind::channel;
  std::vector<std::uint32_t> dims;  // per-sample dims
  std::uint64_t count = 0;
  std::vector<float> values;  // count * prod(dims) * 2, re/im interleaved

  std::size_t sample_elements() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  std::size_t sample_bytes() const { return sample_elements() * 2 * sizeof(float); }
};

inline std::vector<std::uint8_t> encode_records(const RecordSet& set) {
  if (set.dims.empty() || set.dims.size() > 255) throw FormatError("invalid dim count");
  if (set.values.size() != set.count * set.sample_elements() * 2)
    throw DimensionError("record payload does not match dims and count");
  io::Writer w;
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(kDatasetMagic), 4});
  w.put(kDatasetVersion);
  w.put(static_cast<std::uint8_t>(set.kind));
  w.put(static_cast<std::uint8_t>(set.dims.size()));
  for (auto d : set.dims) w.put(d);
  w.put(set.count);
  const auto* payload = reinterpret_cast<const std::uint8_t*>(set.values.data());
  const std::span<const std::uint8_t> bytes(payload, set.values.size() * sizeof(float));
  w.put_bytes(bytes);
  w.put(io::crc32(bytes));
  return std::move(w.bytes());
}

inline RecordSet decode_records(std::span<const std::uint8_t> bytes) {
  io::Reader r(bytes);
  const auto magic = r.get_bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kDatasetMagic))
    throw FormatError("bad magic: not an FMC1 container");
  if (const auto version = r.get<std::uint32_t>(); version != kDatasetVersion)
    throw FormatError("unsupported container version " + std::to_string(version));
  RecordSet set;
  const auto kind = r.get<std::uint8_t>();
  if (kind > 2) throw FormatError("unknown record kind " + std::to_string(kind));
  set.kind = static_cast<RecordKind>(kind);
  const auto ndims = r.get<std::uint8_t>();
  if (ndims == 0) throw FormatError("zero dims");
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t elements = 1;
  for (std::uint8_t i = 0; i < ndims; ++i) {
    const auto d = r.get<std::uint32_t>();
    if (d == 0) throw FormatError("zero-sized dimension");
    if (elements > kMax / d) throw FormatError("dimension overflow");
    elements *= d;
    set.dims.push_back(d);
  }
  set.count = r.get<std::uint64_t>();
  if (elements > kMax / 8) throw FormatError("dimension overflow");
  const std::uint64_t per_sample = elements * 8;
  if (set.count != 0 && per_sample > kMax / set.count) throw FormatError("dimension overflow");
  const std::uint64_t payload_bytes = per_sample * set.count;
  if (r.remaining() < 4 || payload_bytes > r.remaining() - 4) throw FormatError("truncated payload");
  if (payload_bytes != r.remaining() - 4) throw FormatError("trailing bytes after payload");
  const auto payload = r.get_bytes(static_cast<std::size_t>(payload_bytes));
  const auto stored_crc = r.get<std::uint32_t>();
  if (io::crc32(payload) != stored_crc) throw FormatError("payload CRC mismatch");
  set.values.resize(payload.size() / sizeof(float));
  std::memcpy(set.values.data(), payload.data(), payload.size());
  return set;
}

inline void write_records(const std::string& path, const RecordSet& set) {
  io::write_file(path, encode_records(set));
}

inline RecordSet read_records(const std::string& path) {
  const auto bytes = io::read_file(path);
  return decode_records(bytes);
}

namespace detail {

inline void append_complex(std::vector<float>& out, cdouble z) {
  out.push_back(static_cast<float>(z.real()));
  out.push_back(static_cast<float>(z.imag()));
}

inline cdouble complex_at(const std::vector<float>& v, std::size_t i) {
  return {static_cast<double>(v[2 * i]), static_cast<double>(v[2 * i + 1])};
}

inline void require_kind(const RecordSet& set, RecordKind kind, std::size_t ndims) {
  if (set.kind != kind || set.dims.size() != ndims)
    throw FormatError("record set has the wrong kind or rank");
}

}  // namespace detail

inline RecordSet channels_to_records(std::span<const ChannelTensor> hs) {
  if (hs.empty()) throw ValidationError("no channels to write");
  const auto& f = hs.front();
  RecordSet set{RecordKind::channel,
                {static_cast<std::uint32_t>(f.n_rx), static_cast<std::uint32_t>(f.n_tx),
                 static_cast<std::uint32_t>(f.n_sub)},
                hs.size(),
                {}};
  set.values.reserve(hs.size() * f.data.size() * 2);
  for (const auto& h : hs) {
    if (!h.same_dims(f)) throw DimensionError("channels differ in shape");
    for (const auto& z : to_export_layout(h)) detail::append_complex(set.values, z);
  }
  return set;
}

inline std::vector<ChannelTensor> channels_from_records(const RecordSet& set) {
  detail::require_kind(set, RecordKind::channel, 3);
  const std::size_t n_rx = set.dims[0], n_tx = set.dims[1], n_sub = set.dims[2];
  const std::size_t per = set.sample_elements();
  std::vector<ChannelTensor> out;
  out.reserve(set.count);
  for (std::size_t s = 0; s < set.count; ++s) {
    std::vector<cdouble> flat(per);
    for (std::size_t i = 0; i < per; ++i) flat[i] = detail::complex_at(set.values, s * per + i);
    out.push_back(from_export_layout(flat, n_rx, n_tx, n_sub));
  }
  return out;
}

inline RecordSet eigen_to_records(std::span<const EigenMatrix> ws) {
  if (ws.empty()) throw ValidationError("no eigen matrices to write");
  const auto& f = ws.front();
  RecordSet set{RecordKind::eigen,
                {static_cast<std::uint32_t>(f.n_tx), static_cast<std::uint32_t>(f.n_subband)},
                ws.size(),
                {}};
  for (const auto& w : ws) {
    if (w.n_tx != f.n_tx || w.n_subband != f.n_subband)
      throw DimensionError("eigen matrices differ in shape");
    for (std::size_t t = 0; t < w.n_tx; ++t)
      for (std::size_t s = 0; s < w.n_subband; ++s) detail::append_complex(set.values, w(s, t));
  }
  return set;
}

inline std::vector<EigenMatrix> eigen_from_records(const RecordSet& set) {
  detail::require_kind(set, RecordKind::eigen, 2);
  const std::size_t n_tx = set.dims[0], n_sb = set.dims[1];
  std::vector<EigenMatrix> out;
  for (std::size_t s = 0; s < set.count; ++s) {
    EigenMatrix w(n_sb, n_tx);
    for (std::size_t t = 0; t < n_tx; ++t)
      for (std::size_t b = 0; b < n_sb; ++b)
        w(b, t) = detail::complex_at(set.values, s * n_tx * n_sb + t * n_sb + b);
    out.push_back(std::move(w));
  }
  return out;
}

// Only the observation values travel in the container; SNR and seed are
// carried by the run manifest, and pilot indices by the geometry.
inline RecordSet pilots_to_records(std::span<const PilotObservation> obs) {
  if (obs.empty()) throw ValidationError("no observations to write");
  const auto& f = obs.front().data;
  RecordSet set{RecordKind::pilot,
                {static_cast<std::uint32_t>(f.n_rx), static_cast<std::uint32_t>(f.n_sub),
                 static_cast<std::uint32_t>(f.n_tx)},
                obs.size(),
                {}};
  for (const auto& o : obs) {
    if (!o.data.same_dims(f)) throw DimensionError("observations differ in shape");
    for (const auto& z : o.data.data) detail::append_complex(set.values, z);
  }
  return set;
}

inline std::vector<PilotObservation> pilots_from_records(const RecordSet& set,
                                                         const std::vector<std::size_t>& pilot_indices) {
  detail::require_kind(set, RecordKind::pilot, 3);
  if (set.dims[1] != pilot_indices.size())
    throw FormatError("pilot record width does not match the pilot pattern");
  const std::size_t per = set.sample_elements();
  std::vector<PilotObservation> out;
  for (std::size_t s = 0; s < set.count; ++s) {
    PilotObservation o{pilot_indices, ChannelTensor(set.dims[0], set.dims[1], set.dims[2]),
                       std::numeric_limits<double>::quiet_NaN(), 0};
    for (std::size_t i = 0; i < per; ++i) o.data.data[i] = detail::complex_at(set.values, s * per + i);
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace flowmat::channel
