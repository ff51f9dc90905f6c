// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

#include "ddpmw2/error.hpp"

namespace ddpmw2 {

/// Philox4x32-10 block function. Maps a 128-bit counter and 64-bit key to 128 bits.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter apply(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// SplitMix64 finalizer; used to derive child seeds from (seed, index).
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(mix64(seed) ^ mix64(index + 0x632BE59BD9B4E019ull));
}

/// Identifies one independent random stream: the master seed is the Philox
/// key, (stream, substream) occupy the upper 96 bits of the counter.
struct StreamId {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint32_t substream = 0;
};

/// Substream layout shared by every module. Sampler substreams are indexed by
/// step; everything else lives above bit 31 so the ranges never collide.
namespace substreams {
inline constexpr std::uint32_t kInitialState = 0;
constexpr std::uint32_t oracle(std::uint64_t step) { return static_cast<std::uint32_t>(1 + 2 * step); }
constexpr std::uint32_t innovation(std::uint64_t step) { return static_cast<std::uint32_t>(2 + 2 * step); }
inline constexpr std::uint32_t kTarget = 0x80000000u;
inline constexpr std::uint32_t kForwardNoise = 0x80000001u;
inline constexpr std::uint32_t kSlices = 0x80000002u;
inline constexpr std::uint32_t kBootstrap = 0x80000003u;
inline constexpr std::uint32_t kProbes = 0x80000004u;
inline constexpr std::uint32_t kCertify = 0x80000005u;
inline constexpr std::uint32_t kMisc = 0x80000006u;
}  // namespace substreams

/// Sequential generator over one Philox stream. Satisfies
/// UniformRandomBitGenerator so it also works with <algorithm> utilities.
class CounterRng {
 public:
  using result_type = std::uint32_t;

  explicit CounterRng(StreamId id, std::uint32_t first_block = 0)
      : key_{static_cast<std::uint32_t>(id.seed), static_cast<std::uint32_t>(id.seed >> 32)},
        ctr_{first_block, id.substream, static_cast<std::uint32_t>(id.stream),
             static_cast<std::uint32_t>(id.stream >> 32)} {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next_u32(); }

  std::uint32_t next_u32() {
    if (used_ == 4) refill();
    return buffer_[used_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double radius = std::sqrt(-2.0 * std::log(uniform_open()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Laplace(0, 1): variance 2.
  double laplace() {
    const double u = uniform_open() - 0.5;
    return u < 0 ? std::log1p(2.0 * u) : -std::log1p(-2.0 * u);
  }

  /// Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 handled by boosting.
  double gamma(double shape) {
    require(shape > 0.0, "gamma shape must be positive");
    if (shape < 1.0) {
      const double boost = std::pow(uniform_open(), 1.0 / shape);
      return gamma(shape + 1.0) * boost;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = 0.0;
      double v = 0.0;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_open();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Student's t with nu degrees of freedom (unscaled).
  double student_t(double nu) {
    const double z = normal();
    const double chi2 = 2.0 * gamma(0.5 * nu);
    return z / std::sqrt(chi2 / nu);
  }

  /// Uniform integer in [0, n) without modulo bias.
  std::uint64_t uniform_index(std::uint64_t n) {
    require(n > 0, "uniform_index needs n > 0");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t draw = 0;
    do {
      draw = next_u64();
    } while (draw >= limit);
    return draw % n;
  }

 private:
  void refill() {
    buffer_ = Philox4x32::apply(ctr_, key_);
    if (++ctr_[0] == 0) throw NumericalError("Philox block counter exhausted for substream");
    used_ = 0;
  }

  Philox4x32::Key key_;
  Philox4x32::Counter ctr_;
  Philox4x32::Counter buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ddpmw2
