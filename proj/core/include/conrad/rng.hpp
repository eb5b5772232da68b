#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace conrad {

// Draws built directly on mt19937_64 output so that sequences are identical
// across standard library implementations (std distributions are not).

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Box-Muller; consumes two draws per sample.
inline double standard_normal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Independent stream for (seed, step, purpose); lets a resumed run replay the
/// exact draws of an uninterrupted one.
inline std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t step, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

}  // namespace conrad
