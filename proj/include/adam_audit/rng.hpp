#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "adam_audit/linalg.hpp"

namespace adam_audit {

// mt19937_64's output sequence is fixed by the standard. The std::*_distribution
// adaptors are not, so the draws below are done by hand to keep streams identical
// across standard libraries.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Seed for stream `index` under `root`. Independent of scheduling order.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  std::uint64_t state = root;
  std::uint64_t a = splitmix64(state);
  state = a ^ (index * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL);
  splitmix64(state);
  return splitmix64(state);
}

inline Rng make_stream(std::uint64_t root, std::uint64_t index) {
  return Rng(derive_seed(root, index));
}

// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller, one variate per call (no cached second value, so the
// generator state is the only state).
inline double standard_normal(Rng& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double random_sign(Rng& rng) { return (rng() >> 63) ? 1.0 : -1.0; }

// Uniform direction on the unit sphere in R^d, written into `out`.
inline void unit_sphere(Rng& rng, std::span<double> out) {
  if (out.size() == 1) {
    out[0] = random_sign(rng);
    return;
  }
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (double& z : out) {
      z = standard_normal(rng);
      n2 += z * z;
    }
  } while (n2 == 0.0);
  const double inv = 1.0 / std::sqrt(n2);
  for (double& z : out) z *= inv;
}

}  // namespace adam_audit
