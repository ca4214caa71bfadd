#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include <stftlda/ingest.hpp>
#include <stftlda/stft.hpp>
#include <stftlda/synth.hpp>

using namespace stftlda;

TEST(Synth, ExampleShape) {
  auto rec = example_record();
  EXPECT_EQ(rec.length(), 20000u);
  EXPECT_EQ(rec.channels.size(), 13u);
  EXPECT_EQ(rec.sample_rate_hz, 400.0);
  EXPECT_DOUBLE_EQ(rec.duration_s(), 50.0);
  validate(rec);
  // Floor amplitudes decay as 1/floor.
  double peak1 = 0.0, peak13 = 0.0;
  for (std::size_t i = 0; i < 5000; ++i) {
    peak1 = std::max(peak1, std::abs(rec.channels[0].values[i]));
    peak13 = std::max(peak13, std::abs(rec.channels[12].values[i]));
  }
  EXPECT_NEAR(peak1, 1.0, 1e-3);
  EXPECT_NEAR(peak13, 1.0 / 13.0, 1e-3);
}

TEST(Synth, ZeroAmplitudeGivesZeroChannels) {
  auto rec = generate_phased("z", 100.0, 3, {PhaseSpec{2.0, {1.0}, {{0.0}, {0.0}, {0.0}}}}, 0);
  for (const auto& ch : rec.channels)
    for (double v : ch.values) EXPECT_EQ(v, 0.0);
  for (double v : rec.ground_accel) EXPECT_EQ(v, 0.0);
}

TEST(Synth, SingleSinusoidMatchesClosedForm) {
  const double A = 2.5;
  auto rec = generate_phased("s", 400.0, 1, {PhaseSpec{1.0, {1.0}, {{A}}}}, 0);
  ASSERT_EQ(rec.length(), 400u);
  EXPECT_NEAR(rec.channels[0].values[100], A * std::sin(2.0 * std::numbers::pi * 1.0 * 0.25), 1e-12);
  for (std::size_t i = 0; i < 400; ++i)
    EXPECT_NEAR(rec.channels[0].values[i], A * std::sin(2.0 * std::numbers::pi * i / 400.0), 1e-12);
  EXPECT_EQ(rec.ground_accel, rec.channels[0].values);
}

TEST(Synth, GroundAccelIsChannelMean) {
  auto rec = generate_phased("g", 200.0, 4, {PhaseSpec{1.0, {2.0, 5.0}, decaying_amplitudes(4, 2)}}, 0);
  for (std::size_t i = 0; i < rec.length(); ++i) {
    double s = 0.0;
    for (const auto& ch : rec.channels) s += ch.values[i];
    EXPECT_NEAR(rec.ground_accel[i], s / 4.0, 1e-15);
  }
}

TEST(Synth, PhaseBoundariesAtCumulativeDurations) {
  auto rec = generate_phased("p", 100.0, 1, {PhaseSpec{1.0, {5.0}, {{0.0}}}, PhaseSpec{1.0, {5.0}, {{1.0}}}}, 0);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(rec.channels[0].values[i], 0.0);
  EXPECT_NE(rec.channels[0].values[102], 0.0);
}

TEST(Synth, DesignLimitScalingInvertsUnderNormalization) {
  PhasedOptions opts;
  opts.design_limit = 4.0;
  auto phases = std::vector<PhaseSpec>{PhaseSpec{1.0, {3.0}, {{1.0}, {0.5}}}};
  auto plain = generate_phased("d", 100.0, 2, phases, 0);
  auto scaled = normalize_channels(generate_phased("d", 100.0, 2, phases, 0, opts));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < plain.length(); ++i)
      EXPECT_DOUBLE_EQ(scaled.channels[c].values[i], plain.channels[c].values[i]);
}

TEST(Synth, NyquistAndShapeErrors) {
  EXPECT_THROW(generate_phased("n", 100.0, 1, {PhaseSpec{1.0, {50.0}, {{1.0}}}}, 0), ValidationError);
  EXPECT_THROW(generate_phased("n", 100.0, 1, {PhaseSpec{1.0, {60.0}, {{1.0}}}}, 0), ValidationError);
  EXPECT_THROW(generate_phased("n", 100.0, 0, {}, 0), ValidationError);
  EXPECT_THROW(generate_phased("n", 100.0, 2, {PhaseSpec{1.0, {1.0}, {{1.0}}}}, 0), ValidationError);
  EXPECT_THROW(generate_phased("n", 100.0, 1, {PhaseSpec{0.0, {1.0}, {{1.0}}}}, 0), ValidationError);
}

TEST(Synth, RandomPhaseIsSeeded) {
  PhasedOptions opts;
  opts.random_phase = true;
  auto phases = std::vector<PhaseSpec>{PhaseSpec{1.0, {3.0}, {{1.0}}}};
  EXPECT_EQ(generate_phased("r", 100.0, 1, phases, 5, opts), generate_phased("r", 100.0, 1, phases, 5, opts));
  EXPECT_NE(generate_phased("r", 100.0, 1, phases, 5, opts), generate_phased("r", 100.0, 1, phases, 6, opts));
}

TEST(Ensemble, DeterministicAndDistinct) {
  EnsembleConfig cfg;
  cfg.n_channels = 3;
  cfg.sample_rate_hz = 100.0;
  auto a = generate_ensemble(50, 11, cfg);
  auto b = generate_ensemble(50, 11, cfg);
  ASSERT_EQ(a.size(), 50u);
  EXPECT_EQ(a, b);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.size(); ++i) {
    validate(a[i]);
    ids.insert(a[i].id);
    for (std::size_t j = 0; j < i; ++j) EXPECT_NE(a[i].channels, a[j].channels);
    EXPECT_GE(a[i].duration_s(), cfg.duration_min_s - cfg.time_quantum_s);
    EXPECT_LE(a[i].duration_s(), cfg.duration_max_s);
  }
  EXPECT_EQ(ids.size(), 50u);
  EXPECT_NE(generate_ensemble(1, 12, cfg)[0], a[0]);
}

TEST(Ensemble, SingletonAndPrefixStability) {
  EnsembleConfig cfg;
  cfg.n_channels = 2;
  cfg.sample_rate_hz = 50.0;
  auto one = generate_ensemble(1, 3, cfg);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], generate_ensemble(4, 3, cfg)[0]);
  EXPECT_THROW(generate_ensemble(0, 3, cfg), ValidationError);
}

TEST(Ensemble, ConfigJsonRoundTripAndValidation) {
  EnsembleConfig cfg;
  cfg.n_channels = 5;
  cfg.frequency_palette_hz = {1.0, 2.0};
  cfg.attribute = Attribute::moment;
  nlohmann::json j = cfg;
  auto back = j.get<EnsembleConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_THROW((nlohmann::json{{"bogus", 1}}.get<EnsembleConfig>()), ValidationError);
  EnsembleConfig bad;
  bad.frequency_palette_hz = {300.0};
  bad.max_freqs_per_phase = 1;
  EXPECT_THROW(generate_ensemble(1, 0, bad), ValidationError);
}

TEST(Synth, DominantBinMatchesConfiguredFrequency) {
  // One phase per palette frequency; every frame inside a phase peaks at its bin.
  for (double f : {0.4, 1.6, 3.2, 6.0}) {
    auto rec = generate_phased("f", 400.0, 1, {PhaseSpec{12.0, {f}, {{1.0}}}}, 0);
    auto binned = bin_spectrogram(stft(rec.channels[0].values, 400.0), 16.0, 80);
    const std::size_t expect = binned.bin_of(f);
    for (std::size_t t = 0; t < binned.n_frames(); ++t) {
      auto row = binned.frames.row(t);
      EXPECT_EQ(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()), expect);
    }
  }
}
