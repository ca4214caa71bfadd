#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "fft.hpp"
#include "ingest.hpp"
#include "matrix.hpp"

namespace stftlda {

enum class WindowFn { hann, rect };
/// What a spectrogram cell holds: |X| or |X|^2.
enum class MagnitudeKind { magnitude, power };

inline std::string_view to_string(WindowFn w) { return w == WindowFn::hann ? "hann" : "rect"; }
inline std::string_view to_string(MagnitudeKind k) { return k == MagnitudeKind::magnitude ? "magnitude" : "power"; }

inline WindowFn parse_window_fn(std::string_view s) {
  if (s == "hann") return WindowFn::hann;
  if (s == "rect") return WindowFn::rect;
  throw ValidationError("unknown window function '" + std::string(s) + "'");
}

inline MagnitudeKind parse_magnitude_kind(std::string_view s) {
  if (s == "magnitude") return MagnitudeKind::magnitude;
  if (s == "power") return MagnitudeKind::power;
  throw ValidationError("unknown magnitude kind '" + std::string(s) + "'");
}

struct StftOptions {
  double window_s = 5.0;
  double hop_s = 0.125;
  WindowFn window_fn = WindowFn::hann;
  MagnitudeKind kind = MagnitudeKind::magnitude;
};

/// Single-channel short-time spectrum. Row t holds bins 0..W/2 of the frame
/// covering samples [t*hop, t*hop + W).
struct Spectrogram {
  double sample_rate_hz = 0.0;
  std::size_t window_samples = 0;
  std::size_t hop_samples = 0;
  WindowFn window_fn = WindowFn::hann;
  MagnitudeKind kind = MagnitudeKind::magnitude;
  Matrix frames;

  std::size_t n_frames() const noexcept { return frames.rows(); }
  std::size_t n_bins() const noexcept { return frames.cols(); }
  double window_s() const noexcept { return static_cast<double>(window_samples) / sample_rate_hz; }
  double hop_s() const noexcept { return static_cast<double>(hop_samples) / sample_rate_hz; }
  double freq_resolution_hz() const noexcept { return sample_rate_hz / static_cast<double>(window_samples); }
  double bin_frequency(std::size_t k) const noexcept { return static_cast<double>(k) * freq_resolution_hz(); }
};

/// Samples per window/hop for a duration; throws unless at least one sample.
inline std::size_t to_samples(double seconds, double sample_rate_hz, const char* what) {
  if (!(seconds > 0.0) || !std::isfinite(seconds))
    throw ValidationError(std::string(what) + " must be positive");
  const auto n = static_cast<long long>(std::llround(seconds * sample_rate_hz));
  if (n < 1) throw ValidationError(std::string(what) + " is shorter than one sample");
  return static_cast<std::size_t>(n);
}

/// T = floor((L - W) / H) + 1, or 0 if L < W.
inline std::size_t frame_count(std::size_t length, std::size_t window, std::size_t hop) noexcept {
  if (length < window || hop == 0) return 0;
  return (length - window) / hop + 1;
}

/// Periodic window of length n (the DFT-even convention).
inline std::vector<double> make_window(WindowFn fn, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (fn == WindowFn::hann)
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

inline Spectrogram stft(std::span<const double> series, double sample_rate_hz, const StftOptions& opts = {}) {
  if (!(sample_rate_hz > 0.0)) throw ValidationError("stft: sample_rate_hz must be positive");
  const std::size_t W = to_samples(opts.window_s, sample_rate_hz, "stft window");
  const std::size_t H = to_samples(opts.hop_s, sample_rate_hz, "stft hop");
  if (series.size() < W)
    throw ValidationError("stft: series of " + std::to_string(series.size()) + " samples is shorter than one window (" +
                          std::to_string(W) + " samples)");
  const std::size_t T = frame_count(series.size(), W, H);
  const std::size_t F = W / 2 + 1;
  const auto window = make_window(opts.window_fn, W);

  Spectrogram spec;
  spec.sample_rate_hz = sample_rate_hz;
  spec.window_samples = W;
  spec.hop_samples = H;
  spec.window_fn = opts.window_fn;
  spec.kind = opts.kind;
  spec.frames = Matrix(T, F);

  auto& plan = fft::real_plan(W);
  auto in = plan.real();
  auto out = plan.spectrum();
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t start = t * H;
    for (std::size_t i = 0; i < W; ++i) in[i] = series[start + i] * window[i];
    plan.forward();
    auto row = spec.frames.row(t);
    for (std::size_t k = 0; k < F; ++k) {
      const double mag = std::abs(out[k]);
      row[k] = opts.kind == MagnitudeKind::magnitude ? mag : mag * mag;
    }
  }
  return spec;
}

/// Spectrum regrouped into m uniform bins over (0, f_max]. Bin b covers
/// (edges[b], edges[b+1]].
struct BinnedSpectrogram {
  std::size_t m = 0;
  double f_max_hz = 0.0;
  std::vector<double> bin_edges_hz;
  Matrix frames;

  std::size_t n_frames() const noexcept { return frames.rows(); }

  /// Output bin whose interval contains f, or m if f is outside (0, f_max].
  std::size_t bin_of(double f_hz) const noexcept {
    if (!(f_hz > 0.0)) return m;
    const double x = f_hz * static_cast<double>(m) / f_max_hz;
    const auto b = static_cast<long long>(std::ceil(x - 1e-9)) - 1;
    if (b < 0 || b >= static_cast<long long>(m)) return m;
    return static_cast<std::size_t>(b);
  }
};

inline BinnedSpectrogram bin_spectrogram(const Spectrogram& spec, double f_max_hz, std::size_t m) {
  if (m < 1) throw ValidationError("bin_spectrogram: m must be >= 1");
  const double nyquist = spec.sample_rate_hz / 2.0;
  if (!(f_max_hz > 0.0)) throw ValidationError("bin_spectrogram: f_max must be positive");
  if (f_max_hz > nyquist * (1.0 + 1e-12))
    throw ValidationError("bin_spectrogram: f_max " + std::to_string(f_max_hz) + " Hz exceeds Nyquist " +
                          std::to_string(nyquist) + " Hz");
  BinnedSpectrogram out;
  out.m = m;
  out.f_max_hz = f_max_hz;
  out.bin_edges_hz.resize(m + 1);
  for (std::size_t b = 0; b <= m; ++b)
    out.bin_edges_hz[b] = f_max_hz * static_cast<double>(b) / static_cast<double>(m);
  out.frames = Matrix(spec.n_frames(), m);

  // Native bin k (k >= 1; DC dropped) maps to output bin target[k] or none.
  std::vector<std::size_t> target(spec.n_bins(), m);
  for (std::size_t k = 1; k < spec.n_bins(); ++k) target[k] = out.bin_of(spec.bin_frequency(k));
  for (std::size_t t = 0; t < spec.n_frames(); ++t) {
    auto src = spec.frames.row(t);
    auto dst = out.frames.row(t);
    for (std::size_t k = 1; k < src.size(); ++k)
      if (target[k] < m) dst[target[k]] += src[k];
  }
  return out;
}

/// Per-channel binned spectrograms of a record, in channel order.
inline std::vector<BinnedSpectrogram> binned_channels(const SimulationRecord& rec, const StftOptions& opts,
                                                      double f_max_hz, std::size_t m) {
  std::vector<BinnedSpectrogram> out;
  out.reserve(rec.channels.size());
  for (const auto& ch : rec.channels)
    out.push_back(bin_spectrogram(stft(ch.values, rec.sample_rate_hz, opts), f_max_hz, m));
  return out;
}

/// Debug dump: one row per frame, one column per bin.
inline void write_csv(std::ostream& out, const Spectrogram& spec) {
  out << "frame";
  for (std::size_t k = 0; k < spec.n_bins(); ++k) out << ",f" << detail::format_double(spec.bin_frequency(k));
  out << '\n';
  for (std::size_t t = 0; t < spec.n_frames(); ++t) {
    out << t;
    for (double v : spec.frames.row(t)) out << ',' << detail::format_double(v);
    out << '\n';
  }
}

}  // namespace stftlda
