#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>

namespace atune {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// The 64-bit key is the run seed; the 128-bit counter is split into a 64-bit
/// stream id (high half) and a 64-bit block index (low half). Two generators
/// with the same (seed, stream) produce the same sequence regardless of
/// which thread owns them or when they are created.
class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    if (next_ == 2) {
      refill();
    }
    const auto lo = static_cast<std::uint64_t>(buffer_[2 * next_]);
    const auto hi = static_cast<std::uint64_t>(buffer_[2 * next_ + 1]);
    ++next_;
    return lo | (hi << 32);
  }

  /// Raw ten-round bijection, exposed for known-answer tests.
  static Block generate(Block counter, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * counter[0];
      const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * counter[2];
      counter = {static_cast<std::uint32_t>(p1 >> 32) ^ counter[1] ^ key[0],
                 static_cast<std::uint32_t>(p1),
                 static_cast<std::uint32_t>(p0 >> 32) ^ counter[3] ^ key[1],
                 static_cast<std::uint32_t>(p0)};
    }
    return counter;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  void refill() noexcept {
    const Block counter{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                        static_cast<std::uint32_t>(stream_),
                        static_cast<std::uint32_t>(stream_ >> 32)};
    buffer_ = generate(counter, key_);
    ++block_;
    next_ = 0;
  }

  Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  Block buffer_{};
  int next_ = 2;
};

/// What a stream is used for; part of the stream id so that burn-in,
/// initialization and production of the same chain never overlap.
enum class StreamPurpose : std::uint64_t {
  production = 0,
  burnin = 1,
  initial_state = 2,
  data = 3,
  tuning = 4,
};

/// stream id = (chain index << 8) | purpose
constexpr std::uint64_t stream_id(std::uint64_t chain, StreamPurpose purpose) noexcept {
  return (chain << 8) | static_cast<std::uint64_t>(purpose);
}

/// Per-chain random source: uniforms, normals and bounded integers on top of Philox.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) : engine_(seed, stream) {}
  Rng(std::uint64_t seed, std::uint64_t chain, StreamPurpose purpose)
      : engine_(seed, stream_id(chain, purpose)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  double normal() { return normal_(engine_); }

  /// Uniform integer on the closed range [lo, hi].
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(engine_);
  }

  double chi_squared(double dof) { return std::chi_squared_distribution<double>(dof)(engine_); }

  Philox4x32& engine() noexcept { return engine_; }

 private:
  Philox4x32 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace atune
