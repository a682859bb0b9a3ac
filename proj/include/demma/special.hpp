#pragma once

// Error function and its inverse in double precision.
//
// erf uses the everywhere-positive series
//   erf(x) = 2/sqrt(pi) * exp(-x^2) * sum_n 2^n x^(2n+1) / (1*3*...*(2n+1))
// for |x| < 3 (no cancellation), and a Lentz continued fraction for erfc
// beyond that. Absolute error is below 1e-15 over the real line.

#include <cmath>
#include <limits>
#include <numbers>

#include "demma/error.hpp"

namespace demma {

namespace detail {

inline constexpr double kTwoOverSqrtPi = 2.0 / 1.7724538509055160273;  // 2/sqrt(pi)

// Positive series, valid (and accurate) for |x| <= ~4.
inline double erf_series(double x) {
  const double x2 = x * x;
  double term = x;
  double sum = x;
  for (int n = 1; n < 200; ++n) {
    term *= 2.0 * x2 / (2.0 * n + 1.0);
    sum += term;
    if (std::fabs(term) <= std::fabs(sum) * 1e-17) break;
  }
  return kTwoOverSqrtPi * std::exp(-x2) * sum;
}

// erfc(x) for x >= 2 via the continued fraction
//   erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
inline double erfc_continued_fraction(double x) {
  constexpr double kTiny = 1e-300;
  double f = x;
  double c = x;
  double d = 0.0;
  for (int k = 1; k < 500; ++k) {
    const double a = 0.5 * k;
    d = x + a * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = x + a / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::fabs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x * x) / (std::sqrt(std::numbers::pi) * f);
}

}  // namespace detail

inline double erf(double x) {
  if (std::isnan(x)) return x;
  const double ax = std::fabs(x);
  if (ax < 3.0) return detail::erf_series(x);
  if (ax > 6.5) return std::copysign(1.0, x);
  return std::copysign(1.0 - detail::erfc_continued_fraction(ax), x);
}

// Complementary error function, accurate in both tails.
inline double erfc(double x) {
  if (std::isnan(x)) return x;
  if (x < 0.5) return 1.0 - erf(x);
  if (x < 3.0) return 1.0 - detail::erf_series(x);
  if (x > 27.3) return 0.0;
  return detail::erfc_continued_fraction(x);
}

// Inverse error function: Newton's method on erf, with a bisection fallback
// whenever a Newton step leaves the current bracket.
inline double erf_inv(double p) {
  if (!(p > -1.0 && p < 1.0)) {
    throw DomainError("erf_inv requires -1 < p < 1");
  }
  if (p == 0.0) return 0.0;
  const bool negative = p < 0.0;
  const double target = std::fabs(p);
  // Solve erfc(x) = 1 - target for x > 0 to keep precision near 1.
  const double tail = 1.0 - target;

  // Initial guess (Winitzki's approximation).
  constexpr double a = 0.147;
  const double ln = std::log(tail * (2.0 - tail));
  const double t = 2.0 / (std::numbers::pi * a) + ln / 2.0;
  double x = std::sqrt(std::sqrt(t * t - ln / a) - t);

  double lo = 0.0;
  double hi = 6.0;
  while (erfc(hi) > tail && hi < 27.0) hi *= 2.0;

  for (int iter = 0; iter < 100; ++iter) {
    // residual in the better-conditioned form
    const double r = (tail > 0.5) ? (erf(x) - target) : (tail - erfc(x));
    if (r == 0.0) break;
    if (r > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    const double deriv = detail::kTwoOverSqrtPi * std::exp(-x * x);
    double next = x - r / deriv;
    if (!(next > lo && next < hi) || deriv == 0.0) next = 0.5 * (lo + hi);
    if (std::fabs(next - x) <= 1e-16 * std::max(1.0, std::fabs(x))) {
      x = next;
      break;
    }
    x = next;
  }
  return negative ? -x : x;
}

// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * erfc(-z / std::numbers::sqrt2); }

}  // namespace demma
