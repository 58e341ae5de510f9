#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace excite {

/// Seeded generator used everywhere randomness is needed.
///
/// The engine is std::mt19937_64 (output sequence fixed by the standard) and
/// both the uniform and the Gaussian transforms are implemented here, so a
/// given seed reproduces the exact same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  /// Standard normal via Box-Muller; consumes exactly two uniforms per draw.
  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double std_dev) { return mean + std_dev * normal(); }

  /// Uniform integer in [0, n), unbiased via rejection.
  int uniform_int(int n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % static_cast<std::uint64_t>(n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<int>(x % static_cast<std::uint64_t>(n));
  }

  /// Deterministic sub-stream seed, used to split one master seed into
  /// independent per-worker streams (splitmix64 finalizer).
  static std::uint64_t split(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace excite
