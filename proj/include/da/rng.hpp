#pragma once

#include <cmath>
#include <cstdint>

namespace da {

/// SplitMix64 finalizer. Bijective on 64-bit words; the basis of all
/// randomness in this library.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives an independent substream seed from a base seed and up to three
/// integer labels (method id, iteration index, ...). Pure function, so the
/// derivation is independent of evaluation order or concurrency.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                    std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t k = mix64(seed);
  k = mix64(k ^ mix64(a + 0x100000001B3ULL));
  k = mix64(k ^ mix64(b + 0xC2B2AE3D27D4EB4FULL));
  k = mix64(k ^ mix64(c + 0x165667B19E3779F9ULL));
  return k;
}

/// Counter-based random generator: draws are a pure function of
/// (seed, stream, counter), so results do not depend on call order and
/// distinct streams never collide in practice.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix64(mix64(seed) ^ mix64(stream ^ 0x9E3779B97F4A7C15ULL))) {}

  /// Uniform in the open interval (0, 1).
  double uniform(std::uint64_t counter) const {
    const std::uint64_t bits = mix64(key_ ^ mix64(counter));
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; consumes counters 2k and 2k+1.
  double normal(std::uint64_t counter) const {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(std::uint64_t counter, double mean, double stddev) const {
    return mean + stddev * normal(counter);
  }

 private:
  std::uint64_t key_;
};

}  // namespace da
