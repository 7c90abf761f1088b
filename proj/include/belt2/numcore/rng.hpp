#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace belt2 {

/// SplitMix64: a 64-bit counter-based generator. Output i is
/// mix(seed + (i+1) * 0x9E3779B97F4A7C15), so streams are reproducible on
/// every platform. Distributions are implemented here rather than taken
/// from <random>, whose normal/uniform_int algorithms are unspecified.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  /// Standard normal via Box-Muller (one value per call, two uniforms consumed).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  /// Independent generator for a named sub-stream.
  Rng fork(std::uint64_t stream) const { return Rng(mix(state_ ^ mix(stream + 0x632BE59BD9B4E019ULL))); }
  Rng fork(std::string_view name) const { return fork(hash(name)); }

  /// FNV-1a, used to derive stream ids from names.
  static std::uint64_t hash(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace belt2
