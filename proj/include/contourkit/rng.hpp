/**
 * @file rng.hpp
 * @brief Seeded, platform-independent random number generation.
 *
 * std::random engines are portable but the distributions are not, so every
 * draw used anywhere in the toolkit goes through this class. One root seed
 * flows into named substreams (fork), which keeps sampling, SGD shuffling,
 * and dataset synthesis independently reproducible.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ck {

/// splitmix64-based generator. Copyable; copies continue the same sequence.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53-bit resolution.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be >= 1.
  uint64_t next_below(uint64_t n) {
    // rejection sampling keeps the draw unbiased
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Uniform double in [lo, hi).
  double next_in(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  /// Standard normal via Box-Muller. Consumes two draws per call.
  double next_normal() {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  /// Derives an independent substream from the root seed, a stream name, and
  /// an index. Forking does not consume state and is order-independent.
  Rng fork(std::string_view name, uint64_t index = 0) const {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the name
    for (const char c : name) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001b3ull;
    }
    uint64_t mixed = seed_ ^ (h + 0x9e3779b97f4a7c15ull * (index + 1));
    mixed = (mixed ^ (mixed >> 30)) * 0xbf58476d1ce4e5b9ull;
    mixed = (mixed ^ (mixed >> 27)) * 0x94d049bb133111ebull;
    return Rng(mixed ^ (mixed >> 31));
  }

 private:
  uint64_t seed_;
  uint64_t state_;
};

}  // namespace ck
