/**
 * @file data.hpp
 * @brief Synthetic benchmark data: geometry and channel settings from a
 *        key=value config, per-sample channels with their eigen-precoders,
 *        the train/test split and derived random seeds.
 */
#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "flowmat/channel/dataset_io.hpp"
#include "flowmat/channel/generator.hpp"
#include "flowmat/channel/pilots.hpp"
#include "flowmat/channel/precoder.hpp"
#include "flowmat/common/key_values.hpp"

namespace flowmat::train {

// splitmix64 finalizer over (seed, stream, index); gives independent streams
// for channels, noise and batching from one master seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1) + 0xBF58476D1CE4E5B9ull * index;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

enum SeedStream : std::uint64_t {
  kStreamChannel = 1,
  kStreamNoise = 2,
  kStreamBatch = 3,
  kStreamInit = 4,
  kStreamEvalNoise = 5,
  kStreamCodebook = 6,
};

// "ld", "hd", "all", "comb:<spacing>[:<offset>]" or "list:<i>,<j>,...".
inline channel::PilotPattern parse_pilot_pattern(const std::string& spec, std::size_t n_sub) {
  using channel::PilotPattern;
  if (spec == "ld") return PilotPattern::low_density();
  if (spec == "hd") return PilotPattern::high_density();
  if (spec == "all") return PilotPattern::comb(n_sub, 1);
  auto numbers = [&](const std::string& body) {
    std::vector<std::size_t> out;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, spec.rfind("comb:", 0) == 0 ? ':' : ',')) {
      try {
        std::size_t used = 0;
        out.push_back(std::stoull(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw ConfigError("bad pilot pattern: " + spec);
      }
    }
    return out;
  };
  if (spec.rfind("comb:", 0) == 0) {
    const auto v = numbers(spec.substr(5));
    if (v.empty() || v.size() > 2 || v[0] == 0) throw ConfigError("bad pilot pattern: " + spec);
    return PilotPattern::comb(n_sub, v[0], v.size() == 2 ? v[1] : 0);
  }
  if (spec.rfind("list:", 0) == 0) return PilotPattern::custom(numbers(spec.substr(5)));
  throw ConfigError("unknown pilot pattern: " + spec);
}

struct DataConfig {
  channel::SystemGeometry geom;
  std::string pilots = "ld";
  channel::MultipathProfile profile;
  std::size_t n_samples = 400;
  double test_fraction = 0.05;
  std::uint64_t seed = 1;

  static DataConfig from_key_values(const KeyValues& kv) {
    DataConfig c;
    c.geom.n_tx = kv.get_uint("geom.n_tx", c.geom.n_tx);
    c.geom.n_rx = kv.get_uint("geom.n_rx", c.geom.n_rx);
    c.geom.n_sub = kv.get_uint("geom.n_sub", c.geom.n_sub);
    c.geom.n_subband = kv.get_uint("geom.n_subband", c.geom.n_subband);
    c.geom.subcarrier_spacing = kv.get_double("geom.subcarrier_spacing", c.geom.subcarrier_spacing);
    c.pilots = kv.get_string("geom.pilots", c.pilots);
    c.profile.n_paths = kv.get_uint("chan.n_paths", c.profile.n_paths);
    c.profile.delay_spread = kv.get_double("chan.delay_spread", c.profile.delay_spread);
    c.profile.angle_spread = kv.get_double("chan.angle_spread", c.profile.angle_spread);
    c.n_samples = kv.get_uint("data.n_samples", c.n_samples);
    c.test_fraction = kv.get_double("data.test_fraction", c.test_fraction);
    c.seed = kv.get_uint("seed", c.seed);
    c.geom.pilot_pattern = parse_pilot_pattern(c.pilots, c.geom.n_sub);
    c.validate();
    return c;
  }

  void to_key_values(KeyValues& kv) const {
    kv.set_uint("geom.n_tx", geom.n_tx);
    kv.set_uint("geom.n_rx", geom.n_rx);
    kv.set_uint("geom.n_sub", geom.n_sub);
    kv.set_uint("geom.n_subband", geom.n_subband);
    kv.set_double("geom.subcarrier_spacing", geom.subcarrier_spacing);
    kv.set("geom.pilots", pilots);
    kv.set_uint("chan.n_paths", profile.n_paths);
    kv.set_double("chan.delay_spread", profile.delay_spread);
    kv.set_double("chan.angle_spread", profile.angle_spread);
    kv.set_uint("data.n_samples", n_samples);
    kv.set_double("data.test_fraction", test_fraction);
    kv.set_uint("seed", seed);
  }

  void validate() const {
    try {
      geom.validate();
      profile.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(e.what());
    }
    if (n_samples < 2) throw ConfigError("data.n_samples must be >= 2");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
      throw ConfigError("data.test_fraction must lie in (0, 1)");
  }

  // The first n_train samples train, the rest test.
  std::size_t n_train() const {
    const auto n_test = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(test_fraction * static_cast<double>(n_samples))));
    return n_samples - std::min(n_test, n_samples - 1);
  }
};

struct Dataset {
  channel::SystemGeometry geom;
  std::vector<channel::ChannelTensor> channels;
  std::vector<channel::EigenMatrix> eigens;

  std::size_t size() const { return channels.size(); }

  Dataset slice(std::size_t begin, std::size_t end) const {
    Dataset out{geom, {}, {}};
    out.channels.assign(channels.begin() + begin, channels.begin() + end);
    out.eigens.assign(eigens.begin() + begin, eigens.begin() + end);
    return out;
  }
};

inline Dataset generate_dataset(const DataConfig& cfg) {
  Dataset d{cfg.geom, {}, {}};
  d.channels.reserve(cfg.n_samples);
  d.eigens.reserve(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    auto profile = cfg.profile;
    profile.seed = derive_seed(cfg.seed, kStreamChannel, i);
    d.channels.push_back(channel::generate_channel(cfg.geom, profile));
    d.eigens.push_back(channel::compute_precoders(d.channels.back(), cfg.geom));
  }
  return d;
}

// Files written by gen-data inside a data directory.
inline std::string channels_file(const std::string& dir) { return dir + "/channels.fmc"; }
inline std::string eigen_file(const std::string& dir) { return dir + "/eigen.fmc"; }
inline std::string pilots_file(const std::string& dir) { return dir + "/pilots.fmc"; }

inline void save_dataset(const std::string& dir, const Dataset& d) {
  channel::write_records(channels_file(dir), channel::channels_to_records(d.channels));
  channel::write_records(eigen_file(dir), channel::eigen_to_records(d.eigens));
}

// Loads stored channels and precoders. Values come back float32-rounded; the
// precoder rows are renormalized to unit norm after widening.
inline Dataset load_dataset(const std::string& dir, const DataConfig& cfg) {
  Dataset d{cfg.geom, {}, {}};
  d.channels = channel::channels_from_records(channel::read_records(channels_file(dir)));
  d.eigens = channel::eigen_from_records(channel::read_records(eigen_file(dir)));
  if (d.channels.size() != d.eigens.size() || d.channels.empty())
    throw FormatError("dataset: channel and precoder counts differ");
  const auto& h = d.channels.front();
  if (h.n_rx != cfg.geom.n_rx || h.n_tx != cfg.geom.n_tx || h.n_sub != cfg.geom.n_sub ||
      d.eigens.front().n_subband != cfg.geom.n_subband)
    throw FormatError("dataset: stored dimensions do not match the configured geometry");
  for (auto& w : d.eigens)
    for (std::size_t s = 0; s < w.n_subband; ++s) {
      double n2 = 0.0;
      for (std::size_t t = 0; t < w.n_tx; ++t) n2 += std::norm(w(s, t));
      for (std::size_t t = 0; t < w.n_tx; ++t) w(s, t) /= std::sqrt(n2);
    }
  return d;
}

}  // namespace flowmat::train
