#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <limits>
#include <random>

#include "matrix.hpp"
#include "search.hpp"

namespace stftlda::bench {

struct SearchTiming {
  std::size_t n = 0;
  std::size_t l = 0;
  std::size_t rows = 0;
  double naive_ms = 0.0;
  double fft_ms = 0.0;
};

/// Random rows x cols matrix with entries in [0, 1).
inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = unit(rng);
  return m;
}

/// Best-of-`repeats` wall time of one call, in milliseconds.
template <class F>
double best_time_ms(F&& f, std::size_t repeats) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

/// Times naive and FFT sliding distance for a rows x l query against a rows x n target.
inline SearchTiming time_sliding_distance(std::size_t rows, std::size_t n, std::size_t l, std::size_t repeats,
                                          std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  const Matrix target = random_matrix(rows, n, rng);
  const Matrix query = random_matrix(rows, l, rng);
  volatile double sink = 0.0;
  SearchTiming t{n, l, rows, 0.0, 0.0};
  sliding_distance_fft(query, target);  // warm the plan cache
  t.naive_ms = best_time_ms([&] { sink = sink + sliding_distance_naive(query, target)[0]; }, repeats);
  t.fft_ms = best_time_ms([&] { sink = sink + sliding_distance_fft(query, target)[0]; }, repeats);
  return t;
}

}  // namespace stftlda::bench
