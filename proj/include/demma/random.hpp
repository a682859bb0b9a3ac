#pragma once

// Portable draws on top of std::mt19937_64 (whose output sequence is fixed by
// the standard, unlike the std:: distributions).

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>

namespace demma {

/// Uniform draw on [0, 1) with 53 random bits; identical across platforms.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Standard normal draw (Box-Muller on uniform01); identical across platforms.
inline double standard_normal(std::mt19937_64& rng) {
  double u1 = 0.0;
  do {
    u1 = uniform01(rng);
  } while (u1 == 0.0);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Uniform draw on [-limit, limit).
inline double uniform_symmetric(std::mt19937_64& rng, double limit) { return limit * (2.0 * uniform01(rng) - 1.0); }

/// Fisher-Yates shuffle of an index range using uniform01.
template <class It>
void shuffle_portable(It first, It last, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(last - first);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace demma
