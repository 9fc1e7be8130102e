#pragma once

// Splittable random streams.
//
// Every Monte-Carlo replication owns a private Rng obtained from
// Rng::substream(seed, tag, index). The state of a substream is a hash of
// its key, so replication b of seed s produces the same draws regardless of
// how many replications run, in which order, or on which thread.
//
// Normal and gamma variates are generated here rather than through
// <random> distributions so that streams are identical across standard
// library implementations.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace spikes {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t mix_key(std::uint64_t h, std::uint64_t v) noexcept {
  std::uint64_t s = h ^ (v + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2));
  return splitmix64(s);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
  return (x << k) | (x >> (64 - k));
}

// Ziggurat tables for the standard normal (Doornik's ZIGNOR layout, 128 blocks).
struct ZigguratTables {
  static constexpr int kBlocks = 128;
  static constexpr double kR = 3.442619855899;
  static constexpr double kV = 9.91256303526217e-3;
  std::array<double, kBlocks + 1> x{};
  std::array<double, kBlocks> ratio{};

  ZigguratTables() {
    double f = std::exp(-0.5 * kR * kR);
    x[0] = kV / f;
    x[1] = kR;
    x[kBlocks] = 0.0;
    for (int i = 2; i < kBlocks; ++i) {
      x[i] = std::sqrt(-2.0 * std::log(kV / x[i - 1] + f));
      f = std::exp(-0.5 * x[i] * x[i]);
    }
    for (int i = 0; i < kBlocks; ++i) ratio[i] = x[i + 1] / x[i];
  }
};

inline const ZigguratTables kZiggurat{};

inline const ZigguratTables& ziggurat() noexcept { return kZiggurat; }

} // namespace detail

/// xoshiro256++ engine with keyed substreams. Satisfies UniformRandomBitGenerator.
class Rng {
public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept { reseed(seed); }

  /// Independent stream keyed by (seed, tag, index).
  static Rng substream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) noexcept {
    std::uint64_t h = detail::mix_key(0x5EED5EED5EED5EEDULL, seed);
    h = detail::mix_key(h, tag);
    h = detail::mix_key(h, index);
    return Rng(h);
  }

  void reseed(std::uint64_t seed) noexcept {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = detail::splitmix64(sm);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = detail::rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = detail::rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1).
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  std::uint64_t below(std::uint64_t bound) noexcept {
    // Lemire's multiply-shift; bias is below 2^-64 * bound.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>((*this)()) * bound) >> 64);
  }

  double normal() noexcept {
    const auto& zt = detail::ziggurat();
    for (;;) {
      const std::uint64_t bits = (*this)();
      const int i = static_cast<int>(bits & 0x7F);
      const double u = 2.0 * (static_cast<double>(bits >> 11) * 0x1.0p-53) - 1.0;
      if (std::fabs(u) < zt.ratio[i]) return u * zt.x[i];
      if (i == 0) return normal_tail(u < 0.0);
      const double x = u * zt.x[i];
      const double f0 = std::exp(-0.5 * (zt.x[i] * zt.x[i] - x * x));
      const double f1 = std::exp(-0.5 * (zt.x[i + 1] * zt.x[i + 1] - x * x));
      if (f1 + uniform() * (f0 - f1) < 1.0) return x;
    }
  }

  /// Gamma(shape, 1) by Marsaglia–Tsang; shape < 1 uses the U^{1/shape} boost.
  double standard_gamma(double shape) noexcept {
    if (shape < 1.0) {
      const double g = standard_gamma(shape + 1.0);
      return g * std::pow(uniform_open(), 1.0 / shape);
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
      if (u < 1.0 - 0.0331 * (x * x) * (x * x)) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

private:
  double normal_tail(bool negative) noexcept {
    constexpr double r = detail::ZigguratTables::kR;
    double x = 0.0;
    double y = 0.0;
    do {
      x = std::log(uniform_open()) / r;
      y = std::log(uniform_open());
    } while (-2.0 * y < x * x);
    return negative ? x - r : r - x;
  }

  std::array<std::uint64_t, 4> s_{};
};

} // namespace spikes
