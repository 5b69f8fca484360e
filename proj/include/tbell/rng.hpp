#pragma once

// Counter-based random numbers (Philox4x32-10). A generator is fully
// determined by (seed, stream); draws are a pure function of the draw index,
// so work split into fixed blocks reproduces bit-for-bit on any thread count.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace tbell {

class Philox {
 public:
  using result_type = std::uint64_t;

  Philox(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_{static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)} {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (pos_ == 2) refill();
    return buffer_[pos_++];
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_open_zero() noexcept { return 1.0 - uniform(); }

  /// Standard normal (Box-Muller, one variate per pair of uniforms).
  double normal() noexcept {
    const double r = std::sqrt(-2.0 * std::log(uniform_open_zero()));
    return r * std::cos(6.283185307179586 * uniform());
  }

  double exponential(double rate) noexcept { return -std::log(uniform_open_zero()) / rate; }

  /// Failures before the first success of a Bernoulli(p) sequence, p in (0, 1].
  std::uint64_t geometric(double p) noexcept {
    if (p >= 1.0) return 0;
    const double g = std::floor(std::log(uniform_open_zero()) / std::log1p(-p));
    return g >= 1.8e19 ? std::numeric_limits<std::uint64_t>::max() : static_cast<std::uint64_t>(g);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  void refill() noexcept {
    std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                                     stream_[0], stream_[1]};
    std::array<std::uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
      key[0] += 0x9E3779B9u;
      key[1] += 0xBB67AE85u;
    }
    buffer_[0] = (std::uint64_t{ctr[0]} << 32) | ctr[1];
    buffer_[1] = (std::uint64_t{ctr[2]} << 32) | ctr[3];
    ++counter_;
    pos_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 2> stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int pos_ = 2;
};

/// Mixes two words into a stream id (splitmix64 finalizer).
constexpr std::uint64_t mix_stream(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace tbell
