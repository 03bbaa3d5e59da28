#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace uqih {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based generator: draw i is mix64(key + (i + 1) * golden_gamma).
///
/// Every draw is addressable by its counter, so a stream can be split over
/// threads or images without changing the values. Normal variates use the
/// Box-Muller transform over counters (2i, 2i + 1). The algorithm is fixed
/// and documented so outputs match across platforms and standard libraries.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) : key_(mix64(key)) {}

  constexpr std::uint64_t bits(std::uint64_t counter) const {
    return mix64(key_ + (counter + 1) * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform in (0, 1); never returns 0 so log() is safe.
  double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal variate number `index`.
  double normal(std::uint64_t index) const {
    const double u1 = uniform(2 * index);
    const double u2 = uniform(2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

/// Sequential convenience wrapper over CounterRng.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : rng_(seed) {}
  double uniform() { return rng_.uniform(next_++); }
  double normal() { return rng_.normal(normal_next_++); }
  std::uint64_t bits() { return rng_.bits(next_++); }

 private:
  CounterRng rng_;
  std::uint64_t next_ = 0;
  std::uint64_t normal_next_ = std::uint64_t{1} << 62;
};

}  // namespace uqih
