#pragma once

#include <array>
#include <cstdint>

namespace texa::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
Counter philox4x32_10(Counter ctr, Key key) noexcept;

/// SplitMix64 finalizer; used to derive child seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
  return mix64(mix64(mix64(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

/// [0, 1) with 24 bits of resolution; exactly representable in f32.
constexpr float unit_float(std::uint32_t x) noexcept {
  return static_cast<float>(x >> 8) * (1.0f / 16777216.0f);
}

/// Separates independent draw families that share one seed.
enum class Purpose : std::uint32_t {
  mask = 1,
  noise = 2,
  sequence = 3,
};

/// Stateless, random-access draws keyed by (seed, purpose, index, lane block).
/// Any draw can be recomputed from its coordinates alone.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

  Counter block(Purpose purpose, std::uint64_t index, std::uint32_t sub) const noexcept {
    return philox4x32_10({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), sub,
                          static_cast<std::uint32_t>(purpose)},
                         key_);
  }

  /// Per-cell update bit: Bernoulli(rate) for cell `index` at step `step`.
  bool mask_bit(std::uint64_t step, std::uint64_t index, float rate) const noexcept {
    const auto b = block(Purpose::mask, index, static_cast<std::uint32_t>(step));
    return unit_float(b[0]) < rate;
  }

  /// Uniform [0, 1) value for channel `channel` of cell `index`.
  float noise(std::uint64_t index, std::uint32_t channel) const noexcept {
    return unit_float(block(Purpose::noise, index, channel / 4)[channel % 4]);
  }

 private:
  Key key_;
};

/// Sequential generator over the counter stream; used where draws are
/// naturally ordered (pool sampling, rollout lengths).
class Stream {
 public:
  explicit Stream(std::uint64_t seed) noexcept : rng_(seed) {}

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;
  /// Unbiased integer in [0, n); n > 0.
  std::uint32_t below(std::uint32_t n) noexcept;
  /// Uniform integer over the inclusive range [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi) noexcept;

 private:
  CounterRng rng_;
  std::uint64_t counter_ = 0;
  Counter buf_{};
  int used_ = 4;
};

}  // namespace texa::rng
