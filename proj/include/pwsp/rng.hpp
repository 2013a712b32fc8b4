#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace pwsp {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// The 64-bit key is the user seed; the 128-bit counter is split into a
/// 64-bit stream id (high half) and a 64-bit block counter (low half). Two
/// generators with the same seed and different stream ids produce
/// statistically independent sequences, which is what lets trial `i` of a
/// Monte-Carlo loop own the stream `i` regardless of which thread runs it.
///
/// Satisfies UniformRandomBitGenerator with 64-bit output.
class Philox {
 public:
  using result_type = std::uint64_t;

  Philox(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (used_ == 2) {
      refill();
    }
    const auto lo = static_cast<std::uint64_t>(block_[2 * used_]);
    const auto hi = static_cast<std::uint64_t>(block_[2 * used_ + 1]);
    ++used_;
    return (hi << 32) | lo;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform double in (0, 1].
  double uniform_pos() noexcept { return (static_cast<double>((*this)() >> 11) + 1.0) * 0x1.0p-53; }

  std::uint64_t seed() const noexcept {
    return static_cast<std::uint64_t>(key_[0]) | (static_cast<std::uint64_t>(key_[1]) << 32);
  }
  std::uint64_t stream() const noexcept { return stream_; }

  /// Raw block function, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) noexcept {
    constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kW0;
      key[1] += kW1;
    }
    return ctr;
  }

 private:
  void refill() noexcept {
    const std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(counter_),
                                           static_cast<std::uint32_t>(counter_ >> 32),
                                           static_cast<std::uint32_t>(stream_),
                                           static_cast<std::uint32_t>(stream_ >> 32)};
    block_ = block(ctr, key_);
    ++counter_;
    used_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int used_ = 2;
};

/// SplitMix64 finalizer; used only to fold structured stream coordinates
/// (experiment cell, trial, purpose) into one 64-bit stream id.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t stream_id(std::initializer_list<std::uint64_t> coords) noexcept {
  std::uint64_t h = 0x243F6A8885A308D3ull;
  for (auto c : coords) h = mix64(h ^ mix64(c));
  return h;
}

}  // namespace pwsp
