/**
 * @file checkpoint.hpp
 * @brief "FMW1" model checkpoints.
 *
 * Layout (little-endian):
 *   magic "FMW1" | version u32 | config length u32 | config text |
 *   param count u32 | per param: name length u32, name, rank u8,
 *   dims u64[rank], float64 values | kept count u32 | kept u64[] | CRC32
 *
 * The CRC covers everything before it. The config text is the canonical
 * key-sorted rendering and carries `model.task` (feedback | estimation).
 * For estimation checkpoints the kept list holds the pilot subcarriers.
 */
#pragma once

#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "flowmat/common/binary_io.hpp"
#include "flowmat/model/estimation.hpp"
#include "flowmat/model/feedback.hpp"

namespace flowmat::model {

inline constexpr char kCheckpointMagic[4] = {'F', 'M', 'W', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  KeyValues config;  // includes model.task
  std::map<std::string, Tensor> params;
  std::vector<std::size_t> kept_indices;

  std::string task() const { return config.get_string("model.task", ""); }
};

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  io::Writer w;
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(kCheckpointMagic), 4});
  w.put(kCheckpointVersion);
  const std::string text = ck.config.to_text();
  w.put(static_cast<std::uint32_t>(text.size()));
  w.put_string(text);
  w.put(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& [name, t] : ck.params) {
    w.put(static_cast<std::uint32_t>(name.size()));
    w.put_string(name);
    w.put(static_cast<std::uint8_t>(t.shape().size()));
    for (auto d : t.shape()) w.put(static_cast<std::uint64_t>(d));
    for (double v : t.values()) w.put(v);
  }
  w.put(static_cast<std::uint32_t>(ck.kept_indices.size()));
  for (auto k : ck.kept_indices) w.put(static_cast<std::uint64_t>(k));
  const auto crc = io::crc32(w.bytes());
  w.put(crc);
  return std::move(w.bytes());
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw FormatError("checkpoint: truncated");
  io::Reader r(bytes);
  const auto magic = r.get_bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic))
    throw FormatError("checkpoint: bad magic");
  if (r.get<std::uint32_t>() != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version");
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored_crc = 0;
  std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
  if (io::crc32(body) != stored_crc) throw FormatError("checkpoint: CRC mismatch");

  Checkpoint ck;
  const auto text_len = r.get<std::uint32_t>();
  try {
    ck.config = KeyValues::parse(r.get_string(text_len));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: bad config block: ") + e.what());
  }
  const auto n_params = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const auto name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint8_t>();
    Shape shape;
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const auto dim = r.get<std::uint64_t>();
      if (dim == 0 || dim > (std::uint64_t{1} << 32) || numel * dim > (std::size_t{1} << 32))
        throw FormatError("checkpoint: dimension overflow in " + name);
      numel *= dim;
      shape.push_back(static_cast<std::size_t>(dim));
    }
    if (r.remaining() < numel * sizeof(double)) throw FormatError("checkpoint: truncated payload");
    std::vector<double> values(numel);
    for (auto& v : values) v = r.get<double>();
    try {
      ck.params.emplace(name, Tensor(std::move(shape), std::move(values), true));
    } catch (const ValidationError& e) {
      throw FormatError("checkpoint: parameter " + name + ": " + e.what());
    }
  }
  const auto n_kept = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_kept; ++i)
    ck.kept_indices.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
  if (r.remaining() != 4) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  io::write_file(path, encode_checkpoint(ck));
}
inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

// Parameters are copied, so the checkpoint does not alias the live model.
inline std::map<std::string, Tensor> snapshot_params(const ParamStore& ps) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, t] : ps.entries()) out.emplace(name, t.clone());
  return out;
}

inline Checkpoint make_checkpoint(const FeedbackModel& model) {
  Checkpoint ck;
  ck.config = model.config().to_key_values();
  ck.config.set("model.task", "feedback");
  ck.params = snapshot_params(model.params());
  ck.kept_indices = model.kept_indices();
  return ck;
}

inline Checkpoint make_checkpoint(const EstimationModel& model) {
  Checkpoint ck;
  ck.config = model.config().to_key_values();
  ck.config.set("model.task", "estimation");
  ck.params = snapshot_params(model.params());
  ck.kept_indices = model.pilot_indices();
  return ck;
}

inline FeedbackModel feedback_from_checkpoint(const Checkpoint& ck) {
  if (ck.task() != "feedback") throw FormatError("checkpoint does not hold a feedback model");
  FeedbackModel model(ModelConfig::from_key_values(ck.config), ck.params);
  if (model.kept_indices() != ck.kept_indices)
    throw FormatError("checkpoint kept indices disagree with the stored query");
  return model;
}

inline EstimationModel estimation_from_checkpoint(const Checkpoint& ck) {
  if (ck.task() != "estimation") throw FormatError("checkpoint does not hold an estimation model");
  return EstimationModel(ModelConfig::from_key_values(ck.config), ck.kept_indices, ck.params);
}

}  // namespace flowmat::model
