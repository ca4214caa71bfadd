#pragma once

#include <cmath>
#include <span>

namespace stftlda::special {

/// Digamma for x > 0: recurrence up to x >= 10, then the asymptotic series.
inline double digamma(double x) noexcept {
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double f = 1.0 / (x * x);
  const double tail =
      f * (-1.0 / 12.0 + f * (1.0 / 120.0 + f * (-1.0 / 252.0 + f * (1.0 / 240.0 + f * (-1.0 / 132.0 + f * (691.0 / 32760.0 + f * (-1.0 / 12.0)))))));
  return result + std::log(x) - 0.5 / x + tail;
}

/// out[k] = exp(digamma(alpha[k]) - digamma(sum(alpha))).
inline void exp_dirichlet_expectation(std::span<const double> alpha, std::span<double> out) noexcept {
  double total = 0.0;
  for (double a : alpha) total += a;
  const double psi_total = digamma(total);
  for (std::size_t k = 0; k < alpha.size(); ++k) out[k] = std::exp(digamma(alpha[k]) - psi_total);
}

}  // namespace stftlda::special
