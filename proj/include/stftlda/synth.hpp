#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "ingest.hpp"

namespace stftlda {

/// One stationary segment of a synthetic signal. `amplitudes[ch][f]` is the
/// amplitude of `frequencies_hz[f]` on channel `ch`.
struct PhaseSpec {
  double duration_s = 1.0;
  std::vector<double> frequencies_hz;
  std::vector<std::vector<double>> amplitudes;
};

struct PhasedOptions {
  Attribute attribute = Attribute::shear;
  double design_limit = 1.0;
  /// Draw a uniform random initial phase per (channel, frequency, phase).
  bool random_phase = false;
};

/// Amplitude table where every frequency on floor f (1-based) has `scale / f`.
inline std::vector<std::vector<double>> decaying_amplitudes(std::size_t n_channels, std::size_t n_freqs,
                                                            double scale = 1.0) {
  std::vector<std::vector<double>> amps(n_channels, std::vector<double>(n_freqs));
  for (std::size_t ch = 0; ch < n_channels; ++ch)
    for (std::size_t f = 0; f < n_freqs; ++f) amps[ch][f] = scale / static_cast<double>(ch + 1);
  return amps;
}

/// Channel values are sum_f A[ch][f] * sin(2*pi*f*t + phi) with t the
/// absolute sample time i / sample_rate_hz. Ground acceleration is the mean
/// over channels; stored values are scaled by the design limit so that
/// normalization recovers the generating formula.
inline SimulationRecord generate_phased(const std::string& record_id, double sample_rate_hz, std::size_t n_channels,
                                        const std::vector<PhaseSpec>& phases, std::uint64_t seed,
                                        const PhasedOptions& opts = {}) {
  if (n_channels < 1) throw ValidationError("generate_phased: n_channels must be >= 1");
  if (!(sample_rate_hz > 0.0)) throw ValidationError("generate_phased: sample_rate_hz must be positive");
  if (phases.empty()) throw ValidationError("generate_phased: at least one phase required");
  const double nyquist = sample_rate_hz / 2.0;
  std::vector<std::size_t> phase_samples;
  std::size_t total = 0;
  for (std::size_t p = 0; p < phases.size(); ++p) {
    const auto& ph = phases[p];
    if (!(ph.duration_s > 0.0)) throw ValidationError("phase " + std::to_string(p) + ": duration must be positive");
    if (ph.frequencies_hz.empty()) throw ValidationError("phase " + std::to_string(p) + ": no frequencies");
    for (double f : ph.frequencies_hz) {
      if (!(f > 0.0)) throw ValidationError("phase " + std::to_string(p) + ": frequency must be positive");
      if (f >= nyquist)
        throw ValidationError("phase " + std::to_string(p) + ": frequency " + std::to_string(f) +
                              " Hz is at or above Nyquist (" + std::to_string(nyquist) + " Hz)");
    }
    if (ph.amplitudes.size() != n_channels)
      throw ValidationError("phase " + std::to_string(p) + ": amplitude table needs one row per channel");
    for (const auto& row : ph.amplitudes)
      if (row.size() != ph.frequencies_hz.size())
        throw ValidationError("phase " + std::to_string(p) + ": amplitude row needs one entry per frequency");
    auto n = static_cast<std::size_t>(std::llround(ph.duration_s * sample_rate_hz));
    phase_samples.push_back(n);
    total += n;
  }
  if (total == 0) throw ValidationError("generate_phased: total duration rounds to zero samples");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);

  SimulationRecord rec;
  rec.id = record_id;
  rec.sample_rate_hz = sample_rate_hz;
  rec.ground_accel.assign(total, 0.0);
  rec.channels.resize(n_channels);
  for (std::size_t ch = 0; ch < n_channels; ++ch) {
    rec.channels[ch].attribute = opts.attribute;
    rec.channels[ch].floor = static_cast<int>(ch + 1);
    rec.channels[ch].design_limit = opts.design_limit;
    rec.channels[ch].values.assign(total, 0.0);
  }

  std::size_t start = 0;
  for (std::size_t p = 0; p < phases.size(); ++p) {
    const auto& ph = phases[p];
    for (std::size_t ch = 0; ch < n_channels; ++ch) {
      auto& values = rec.channels[ch].values;
      for (std::size_t f = 0; f < ph.frequencies_hz.size(); ++f) {
        const double amp = ph.amplitudes[ch][f];
        const double offset = opts.random_phase ? phase_dist(rng) : 0.0;
        const double omega = 2.0 * std::numbers::pi * ph.frequencies_hz[f];
        for (std::size_t i = start; i < start + phase_samples[p]; ++i) {
          const double t = static_cast<double>(i) / sample_rate_hz;
          values[i] += amp * std::sin(omega * t + offset);
        }
      }
    }
    start += phase_samples[p];
  }

  for (std::size_t i = 0; i < total; ++i) {
    double sum = 0.0;
    for (const auto& ch : rec.channels) sum += ch.values[i];
    rec.ground_accel[i] = sum / static_cast<double>(n_channels);
  }
  if (opts.design_limit != 1.0)
    for (auto& ch : rec.channels)
      for (double& v : ch.values) v *= opts.design_limit;
  return rec;
}

/// Relative amplitude of the 1.6 Hz component in the mixed third phase of the
/// illustrative example. Below 1 so that the 0.4 Hz topic dominates the mix.
inline constexpr double kExampleMixSecondaryAmplitude = 0.75;

/// Four 12.5 s phases: 0.4 Hz, 3.2 Hz, 0.4 + 1.6 Hz, 1.6 Hz.
inline std::vector<PhaseSpec> example_phases(std::size_t n_channels = 13) {
  auto mix = decaying_amplitudes(n_channels, 2);
  for (auto& row : mix) row[1] *= kExampleMixSecondaryAmplitude;
  return {
      PhaseSpec{12.5, {0.4}, decaying_amplitudes(n_channels, 1)},
      PhaseSpec{12.5, {3.2}, decaying_amplitudes(n_channels, 1)},
      PhaseSpec{12.5, {0.4, 1.6}, std::move(mix)},
      PhaseSpec{12.5, {1.6}, decaying_amplitudes(n_channels, 1)},
  };
}

inline SimulationRecord example_record(std::uint64_t seed = 0) {
  return generate_phased("example", 400.0, 13, example_phases(13), seed);
}

/// Template for randomized ensembles.
struct EnsembleConfig {
  std::size_t n_channels = 13;
  double sample_rate_hz = 400.0;
  double duration_min_s = 30.0;
  double duration_max_s = 60.0;
  /// Durations and phase boundaries snap to this grid.
  double time_quantum_s = 0.125;
  std::size_t phases_min = 2;
  std::size_t phases_max = 5;
  double min_phase_s = 4.0;
  std::size_t max_freqs_per_phase = 2;
  std::vector<double> frequency_palette_hz{0.4, 0.8, 1.2, 1.6, 2.4, 3.2, 4.0, 6.0};
  double amplitude_min = 0.5;
  double amplitude_max = 1.5;
  /// Linear fade-in/out at record ends.
  double taper_s = 1.0;
  bool random_phase = true;
  double design_limit = 1.0;
  Attribute attribute = Attribute::shear;
  std::string id_prefix = "eq";

  void validate() const {
    if (n_channels < 1) throw ValidationError("ensemble: n_channels must be >= 1");
    if (!(sample_rate_hz > 0.0)) throw ValidationError("ensemble: sample_rate_hz must be positive");
    if (!(duration_min_s > 0.0) || duration_max_s < duration_min_s)
      throw ValidationError("ensemble: need 0 < duration_min_s <= duration_max_s");
    if (!(time_quantum_s > 0.0)) throw ValidationError("ensemble: time_quantum_s must be positive");
    if (phases_min < 1 || phases_max < phases_min) throw ValidationError("ensemble: need 1 <= phases_min <= phases_max");
    if (static_cast<double>(phases_max) * min_phase_s > duration_min_s)
      throw ValidationError("ensemble: phases_max * min_phase_s exceeds duration_min_s");
    if (max_freqs_per_phase < 1 || frequency_palette_hz.size() < max_freqs_per_phase)
      throw ValidationError("ensemble: palette smaller than max_freqs_per_phase");
    for (double f : frequency_palette_hz)
      if (!(f > 0.0) || f >= sample_rate_hz / 2.0)
        throw ValidationError("ensemble: palette frequency outside (0, Nyquist)");
    if (!(amplitude_min > 0.0) || amplitude_max < amplitude_min)
      throw ValidationError("ensemble: need 0 < amplitude_min <= amplitude_max");
    if (!(design_limit > 0.0)) throw ValidationError("ensemble: design_limit must be positive");
  }
};

inline void to_json(nlohmann::json& j, const EnsembleConfig& c) {
  j = {{"n_channels", c.n_channels},         {"sample_rate_hz", c.sample_rate_hz},
       {"duration_min_s", c.duration_min_s}, {"duration_max_s", c.duration_max_s},
       {"time_quantum_s", c.time_quantum_s}, {"phases_min", c.phases_min},
       {"phases_max", c.phases_max},         {"min_phase_s", c.min_phase_s},
       {"max_freqs_per_phase", c.max_freqs_per_phase}, {"frequency_palette_hz", c.frequency_palette_hz},
       {"amplitude_min", c.amplitude_min},   {"amplitude_max", c.amplitude_max},
       {"taper_s", c.taper_s},               {"random_phase", c.random_phase},
       {"design_limit", c.design_limit},     {"attribute", to_string(c.attribute)},
       {"id_prefix", c.id_prefix}};
}

inline void from_json(const nlohmann::json& j, EnsembleConfig& c) {
  static const std::set<std::string> known{
      "n_channels",  "sample_rate_hz", "duration_min_s",      "duration_max_s",       "time_quantum_s",
      "phases_min",  "phases_max",     "min_phase_s",         "max_freqs_per_phase",  "frequency_palette_hz",
      "amplitude_min", "amplitude_max", "taper_s",            "random_phase",         "design_limit",
      "attribute",   "id_prefix"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ValidationError("ensemble config: unknown key '" + key + "'");
  EnsembleConfig d;
  c.n_channels = j.value("n_channels", d.n_channels);
  c.sample_rate_hz = j.value("sample_rate_hz", d.sample_rate_hz);
  c.duration_min_s = j.value("duration_min_s", d.duration_min_s);
  c.duration_max_s = j.value("duration_max_s", d.duration_max_s);
  c.time_quantum_s = j.value("time_quantum_s", d.time_quantum_s);
  c.phases_min = j.value("phases_min", d.phases_min);
  c.phases_max = j.value("phases_max", d.phases_max);
  c.min_phase_s = j.value("min_phase_s", d.min_phase_s);
  c.max_freqs_per_phase = j.value("max_freqs_per_phase", d.max_freqs_per_phase);
  c.frequency_palette_hz = j.value("frequency_palette_hz", d.frequency_palette_hz);
  c.amplitude_min = j.value("amplitude_min", d.amplitude_min);
  c.amplitude_max = j.value("amplitude_max", d.amplitude_max);
  c.taper_s = j.value("taper_s", d.taper_s);
  c.random_phase = j.value("random_phase", d.random_phase);
  c.design_limit = j.value("design_limit", d.design_limit);
  auto attr_name = j.value("attribute", std::string(to_string(d.attribute)));
  auto attr = parse_attribute(attr_name);
  if (!attr) throw ValidationError("ensemble config: unknown attribute '" + attr_name + "'");
  c.attribute = *attr;
  c.id_prefix = j.value("id_prefix", d.id_prefix);
}

namespace detail {

/// Mode-shape-like per-floor amplitude profiles.
inline double mode_shape(std::size_t shape, std::size_t floor, std::size_t n_floors) {
  const double f = static_cast<double>(floor);
  const double n = static_cast<double>(n_floors);
  switch (shape % 3) {
    case 0: return 1.0 / f;
    case 1: return f / n;
    default: return std::sin(std::numbers::pi * f / (n + 1.0));
  }
}

}  // namespace detail

/// Deterministic randomized ensemble. Each record draws from its own stream
/// seeded by (seed, index), so record i does not depend on `count`.
inline std::vector<SimulationRecord> generate_ensemble(std::size_t count, std::uint64_t seed,
                                                       const EnsembleConfig& cfg = {}) {
  if (count < 1) throw ValidationError("generate_ensemble: count must be >= 1");
  cfg.validate();
  std::vector<SimulationRecord> out;
  out.reserve(count);
  const double q = cfg.time_quantum_s;
  for (std::size_t r = 0; r < count; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const double duration =
        q * std::floor((cfg.duration_min_s + unit(rng) * (cfg.duration_max_s - cfg.duration_min_s)) / q);
    std::uniform_int_distribution<std::size_t> phase_count(cfg.phases_min, cfg.phases_max);
    const std::size_t n_phases = phase_count(rng);

    // Phase lengths: min_phase_s each plus a random share of the slack.
    const double slack = duration - static_cast<double>(n_phases) * cfg.min_phase_s;
    std::vector<double> shares(n_phases);
    double share_sum = 0.0;
    for (auto& s : shares) share_sum += (s = unit(rng) + 1e-3);
    std::vector<PhaseSpec> phases(n_phases);
    double used = 0.0;
    for (std::size_t p = 0; p < n_phases; ++p) {
      double len = p + 1 == n_phases ? duration - used
                                     : q * std::floor((cfg.min_phase_s + slack * shares[p] / share_sum) / q);
      used += len;
      phases[p].duration_s = len;
    }
    for (auto& ph : phases) {
      std::uniform_int_distribution<std::size_t> nf(1, cfg.max_freqs_per_phase);
      std::vector<double> palette = cfg.frequency_palette_hz;
      std::shuffle(palette.begin(), palette.end(), rng);
      ph.frequencies_hz.assign(palette.begin(), palette.begin() + static_cast<std::ptrdiff_t>(nf(rng)));
      ph.amplitudes.assign(cfg.n_channels, std::vector<double>(ph.frequencies_hz.size()));
      for (std::size_t f = 0; f < ph.frequencies_hz.size(); ++f) {
        const std::size_t shape = static_cast<std::size_t>(unit(rng) * 3.0);
        const double scale = cfg.amplitude_min + unit(rng) * (cfg.amplitude_max - cfg.amplitude_min);
        for (std::size_t ch = 0; ch < cfg.n_channels; ++ch)
          ph.amplitudes[ch][f] = scale * detail::mode_shape(shape, ch + 1, cfg.n_channels);
      }
    }

    PhasedOptions opts;
    opts.attribute = cfg.attribute;
    opts.design_limit = cfg.design_limit;
    opts.random_phase = cfg.random_phase;
    char id[64];
    std::snprintf(id, sizeof(id), "%s%03zu", cfg.id_prefix.c_str(), r);
    auto rec = generate_phased(id, cfg.sample_rate_hz, cfg.n_channels, phases, rng(), opts);

    if (cfg.taper_s > 0.0) {
      const double n = static_cast<double>(rec.length());
      const double ramp = cfg.taper_s * cfg.sample_rate_hz;
      auto gain = [&](std::size_t i) {
        const double x = static_cast<double>(i);
        return std::min({1.0, (x + 1.0) / ramp, (n - x) / ramp});
      };
      for (std::size_t i = 0; i < rec.length(); ++i) {
        const double g = gain(i);
        rec.ground_accel[i] *= g;
        for (auto& ch : rec.channels) ch.values[i] *= g;
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace stftlda
