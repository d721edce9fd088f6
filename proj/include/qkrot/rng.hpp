#pragma once

// Reproducible random numbers for pulse-train generation.
//
// Raw bits come from std::mt19937_64, whose output sequence is fixed by the
// C++ standard. The engine seed is splitmix64(seed + 0x9E3779B97F4A7C15 * stream),
// so a (seed, stream) pair names an independent sequence. Uniforms take the
// top 53 bits; normals use the Marsaglia polar method. The library does not
// use std::*_distribution, whose algorithms are implementation-defined.

#include <cmath>
#include <cstdint>
#include <random>

namespace qkrot {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : engine_(splitmix64(seed + 0x9E3779B97F4A7C15ULL * stream)) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace qkrot
