#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ksp {

// Generator used everywhere randomness is needed; the name is recorded in
// reports for reproducibility.
inline constexpr const char* kRngName = "mt19937_64";

// Unbiased uniform integer in [0, bound) via rejection; avoids the
// implementation-defined stream of std::uniform_int_distribution.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % bound;
}

// Uniform double in (0, 1].
inline double uniform_unit(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

// One standard complex-Gaussian pair per call (Box-Muller).
inline void gaussian_pair(std::mt19937_64& rng, double& z0, double& z1) {
  const double u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  const double r = std::sqrt(-2.0 * std::log(u1));
  z0 = r * std::cos(2.0 * M_PI * u2);
  z1 = r * std::sin(2.0 * M_PI * u2);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Per-slice mask/noise seeds derived from one global seed.
inline std::uint64_t seed_for_slice(std::uint64_t global_seed, int slice_index) {
  return splitmix64(global_seed ^
                    (0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(slice_index) + 1)));
}

}  // namespace ksp
