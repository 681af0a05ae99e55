#include <gtest/gtest.h>

#include "flowmat/channel/generator.hpp"
#include "flowmat/channel/pilots.hpp"
#include "flowmat/channel/precoder.hpp"
#include "flowmat/eval/metrics.hpp"
#include "flowmat/training/data.hpp"

using namespace flowmat;
using namespace flowmat::channel;

namespace {

SystemGeometry small_geometry(const std::string& pilots = "comb:4") {
  SystemGeometry g;
  g.n_tx = 8;
  g.n_rx = 2;
  g.n_sub = 52;
  g.n_subband = 13;
  g.subcarrier_spacing = 120e3;
  g.pilot_pattern = train::parse_pilot_pattern(pilots, g.n_sub);
  return g;
}

MultipathProfile profile(std::size_t paths, std::uint64_t seed) {
  MultipathProfile p;
  p.n_paths = paths;
  p.seed = seed;
  return p;
}

}  // namespace

TEST(Generator, DeterministicPerSeedAndUnitPower) {
  const auto g = small_geometry();
  const auto a = generate_channel(g, profile(3, 7));
  const auto b = generate_channel(g, profile(3, 7));
  const auto c = generate_channel(g, profile(3, 8));
  EXPECT_EQ(a.data, b.data);
  EXPECT_NE(a.data, c.data);
  double p = 0.0;
  for (auto z : a.data) p += std::norm(z);
  EXPECT_NEAR(p / static_cast<double>(a.data.size()), 1.0, 1e-12);
}

TEST(Generator, SinglePathIsRankOnePerSubcarrier) {
  const auto g = small_geometry();
  const auto h = generate_channel(g, profile(1, 3));
  const auto c = eval::freq_correlation(h);
  for (const auto& row : c)
    for (double v : row) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(Generator, ExportLayoutRoundTrips) {
  const auto h = generate_channel(small_geometry(), profile(2, 4));
  const auto back = from_export_layout(to_export_layout(h), h.n_rx, h.n_tx, h.n_sub);
  EXPECT_EQ(back.data, h.data);
}

TEST(Pilots, NoiselessObservationEqualsTheChannel) {
  const auto g = small_geometry();
  const auto h = generate_channel(g, profile(3, 5));
  const auto obs = observe_pilots(h, g, std::numeric_limits<double>::infinity(), 1);
  const auto ls = ls_estimate(obs);
  const auto ref = restrict_to_pilots(h, g.pilot_pattern.pilot_indices);
  EXPECT_EQ(ls.values.data, ref.values.data);
}

TEST(Pilots, LsWithSymbolsDividesThemOut) {
  const auto g = small_geometry();
  const auto h = generate_channel(g, profile(2, 5));
  auto obs = observe_pilots(h, g, std::numeric_limits<double>::infinity(), 1);
  std::vector<cdouble> symbols(obs.data.data.size(), cdouble{0.0, 1.0});
  for (std::size_t i = 0; i < symbols.size(); ++i) obs.data.data[i] *= symbols[i];
  const auto ls = ls_estimate(obs, symbols);
  const auto ref = restrict_to_pilots(h, g.pilot_pattern.pilot_indices);
  for (std::size_t i = 0; i < ls.values.data.size(); ++i)
    EXPECT_NEAR(std::abs(ls.values.data[i] - ref.values.data[i]), 0.0, 1e-12);
  symbols[0] = 0.0;
  EXPECT_THROW(ls_estimate(obs, symbols), ValidationError);
}

// With unit pilots and unit channel power, LS NMSE equals the noise variance,
// i.e. -SNR dB.
TEST(Pilots, LsNoiseLawMonteCarlo) {
  const auto g = small_geometry();
  for (double snr : {0.0, 10.0, 20.0}) {
    eval::NmseAccumulator acc;
    for (std::uint64_t i = 0; i < 2000; ++i) {
      const auto h = generate_channel(g, profile(3, 100 + i));
      const auto obs = observe_pilots(h, g, snr, 9000 + i);
      acc.add(ls_estimate(obs).values, restrict_to_pilots(h, obs.pilot_indices).values);
    }
    EXPECT_NEAR(acc.db(), -snr, 0.3) << "snr " << snr;
  }
}

TEST(Pilots, InterpolationIsExactAtPilotsAndLinearBetween) {
  PilotChannel p;
  p.pilot_indices = {1, 5};
  p.values = ChannelTensor(1, 2, 1);
  p.values(0, 0, 0) = {1.0, 0.0};
  p.values(0, 1, 0) = {5.0, -4.0};
  const auto h = interpolate_frequency(p, 8);
  EXPECT_EQ(h(0, 0, 0), cdouble(1.0, 0.0));  // constant extrapolation
  EXPECT_EQ(h(0, 1, 0), cdouble(1.0, 0.0));
  EXPECT_EQ(h(0, 3, 0), cdouble(3.0, -2.0));
  EXPECT_EQ(h(0, 5, 0), cdouble(5.0, -4.0));
  EXPECT_EQ(h(0, 7, 0), cdouble(5.0, -4.0));
}

TEST(Pilots, InterpolationValidatesPilots) {
  PilotChannel p;
  p.pilot_indices = {3};
  p.values = ChannelTensor(1, 1, 1);
  EXPECT_THROW(interpolate_frequency(p, 8), ValidationError);
  p.pilot_indices = {4, 2};
  p.values = ChannelTensor(1, 2, 1);
  EXPECT_THROW(interpolate_frequency(p, 8), ValidationError);
}

TEST(Pilots, SinglePathDensePilotsInterpolateBelowMinus20Db) {
  const auto g = small_geometry("comb:2");
  eval::NmseAccumulator acc;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto h = generate_channel(g, profile(1, 300 + i));
    const auto obs = observe_pilots(h, g, std::numeric_limits<double>::infinity(), 0);
    acc.add(interpolate_frequency(ls_estimate(obs), g.n_sub), h);
  }
  EXPECT_LT(acc.db(), -20.0);
}

TEST(Pilots, RejectsNanSnr) {
  const auto g = small_geometry();
  const auto h = generate_channel(g, profile(1, 1));
  EXPECT_THROW(observe_pilots(h, g, std::nan(""), 0), ValidationError);
}

TEST(PilotPattern, ParsesEveryForm) {
  EXPECT_EQ(train::parse_pilot_pattern("comb:4:1", 12).pilot_indices,
            (std::vector<std::size_t>{1, 5, 9}));
  EXPECT_EQ(train::parse_pilot_pattern("list:0,3,7", 12).pilot_indices,
            (std::vector<std::size_t>{0, 3, 7}));
  EXPECT_EQ(train::parse_pilot_pattern("all", 3).pilot_indices, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(train::parse_pilot_pattern("comb:0", 12), ConfigError);
  EXPECT_THROW(train::parse_pilot_pattern("list:1,x", 12), ConfigError);
  EXPECT_THROW(train::parse_pilot_pattern("dense", 12), ConfigError);
}

TEST(PilotPattern, DensityPresetsFitTheDefaultGrid) {
  const SystemGeometry g;
  const auto hd = PilotPattern::high_density();
  const auto ld = PilotPattern::low_density();
  EXPECT_NO_THROW(hd.validate(g.n_sub));
  EXPECT_NO_THROW(ld.validate(g.n_sub));
  EXPECT_GT(hd.size(), ld.size());
}

TEST(Precoder, RankOneChannelGivesTheTransmitVector) {
  const auto g = small_geometry();
  const auto v = ula_steering(g.n_tx, 0.3);
  const auto u = ula_steering(g.n_rx, -0.2);
  ChannelTensor h(g.n_rx, g.n_sub, g.n_tx);
  for (std::size_t r = 0; r < g.n_rx; ++r)
    for (std::size_t k = 0; k < g.n_sub; ++k)
      for (std::size_t t = 0; t < g.n_tx; ++t) h(r, k, t) = u[r] * std::conj(v[t]);
  const auto w = compute_precoders(h, g);
  const double nv = norm2(v);
  for (std::size_t s = 0; s < g.n_subband; ++s) {
    cdouble acc{0.0, 0.0};
    for (std::size_t t = 0; t < g.n_tx; ++t) acc += std::conj(w(s, t)) * v[t] / nv;
    EXPECT_GT(std::abs(acc), 1.0 - 1e-8);
  }
}

TEST(Precoder, RowsAreUnitNorm) {
  const auto g = small_geometry();
  const auto w = compute_precoders(generate_channel(g, profile(3, 11)), g);
  for (std::size_t s = 0; s < w.n_subband; ++s) EXPECT_NEAR(norm2(w.row(s)), 1.0, 1e-12);
}

TEST(Precoder, RejectsGeometryMismatch) {
  const auto g = small_geometry();
  auto other = g;
  other.n_tx = 4;
  EXPECT_THROW(compute_precoders(generate_channel(other, profile(1, 1)), g), DimensionError);
}
