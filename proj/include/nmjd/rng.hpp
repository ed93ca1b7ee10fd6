// SPDX-License-Identifier: Apache-2.0
//
// Reproducible random streams. Every Monte Carlo path owns an independent
// xoshiro256++ stream keyed by (master seed, stream index), so results do not
// depend on how paths are scheduled across threads.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace nmjd {

/// SplitMix64: seeds other generators and mixes keys.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Finalizer of SplitMix64 applied to a single word.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Key for sub-stream `index` of `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed ^ mix64(index + 0x632be59bd9b4e019ull));
}

class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm();
  }
  RandomStream(std::uint64_t seed, std::uint64_t index) : RandomStream(derive_seed(seed, index)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal by Box-Muller; always consumes exactly two uniforms.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Poisson(mean) by sequential inversion. Means above 30 are split into
  /// equal parts so that exp(-part) stays well inside double range.
  int poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    int parts = 1;
    while (mean / parts > 30.0) ++parts;
    const double m = mean / parts;
    int total = 0;
    for (int i = 0; i < parts; ++i) total += poisson_inversion(m);
    return total;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  int poisson_inversion(double m) {
    const double u = uniform();
    double p = std::exp(-m);
    double cdf = p;
    int k = 0;
    while (u > cdf) {
      ++k;
      p *= m / k;
      const double next = cdf + p;
      if (next == cdf) break;  // remaining mass below double resolution
      cdf = next;
    }
    return k;
  }

  std::array<std::uint64_t, 4> s_{};
};

}  // namespace nmjd
