#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>

#include <fftw3.h>

#include "error.hpp"

namespace stftlda::fft {

namespace detail {

// The FFTW planner is not re-entrant; execution on distinct plans is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

/// Real-to-complex and complex-to-real plans of one size, with their own
/// aligned buffers.
class RealPlan {
 public:
  explicit RealPlan(std::size_t n) : n_(n) {
    real_ = fftw_alloc_real(n);
    spec_ = fftw_alloc_complex(n / 2 + 1);
    if (!real_ || !spec_) throw Error("fftw allocation failed");
    std::lock_guard lock(planner_mutex());
    const int ni = static_cast<int>(n);
    forward_ = fftw_plan_dft_r2c_1d(ni, real_, spec_, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(ni, spec_, real_, FFTW_ESTIMATE);
    if (!forward_ || !inverse_) throw Error("fftw planning failed");
  }
  RealPlan(const RealPlan&) = delete;
  RealPlan& operator=(const RealPlan&) = delete;
  ~RealPlan() {
    std::lock_guard lock(planner_mutex());
    if (forward_) fftw_destroy_plan(forward_);
    if (inverse_) fftw_destroy_plan(inverse_);
    fftw_free(real_);
    fftw_free(spec_);
  }

  std::size_t size() const noexcept { return n_; }
  std::span<double> real() noexcept { return {real_, n_}; }
  std::span<std::complex<double>> spectrum() noexcept {
    return {reinterpret_cast<std::complex<double>*>(spec_), n_ / 2 + 1};
  }
  void forward() noexcept { fftw_execute(forward_); }
  /// Unnormalized: forward followed by inverse scales by n.
  void inverse() noexcept { fftw_execute(inverse_); }

 private:
  std::size_t n_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

}  // namespace detail

/// Per-thread plan of size n, created on first use.
inline detail::RealPlan& real_plan(std::size_t n) {
  if (n == 0) throw ValidationError("fft size must be positive");
  thread_local std::map<std::size_t, std::unique_ptr<detail::RealPlan>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<detail::RealPlan>(n);
  return *slot;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace stftlda::fft
