#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace pertvi::rng {

/// SplitMix64 finalizer. Full-avalanche mix of one 64-bit word.
inline std::uint64_t mix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Counter-based word: any (seed, stream, counter) triple maps to an
/// independent-looking 64-bit value, so draws are random access and
/// reproducible regardless of evaluation order or threading.
inline std::uint64_t word_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  return mix(mix(mix(seed) ^ stream) ^ counter);
}

/// Uniform draw in (0, 1], suitable as a log() argument.
inline double uniform_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  const std::uint64_t bits = word_at(seed, stream, counter) >> 11;  // 53 bits
  return 1.0 - static_cast<double>(bits) * 0x1.0p-53;
}

/// Standard normal variate by index (Box-Muller on consecutive uniform
/// pairs; indices 2j and 2j+1 share one pair).
inline double normal_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const std::uint64_t pair = index >> 1;
  const double u1 = uniform_at(seed, stream, 2 * pair);
  const double u2 = uniform_at(seed, stream, 2 * pair + 1);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  return (index & 1) == 0 ? r * std::cos(theta) : r * std::sin(theta);
}

/// Uniform in [0, n) without modulo bias worth worrying about at n << 2^64.
inline std::uint64_t below(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                           std::uint64_t n) {
  return word_at(seed, stream, counter) % n;
}

}  // namespace pertvi::rng
