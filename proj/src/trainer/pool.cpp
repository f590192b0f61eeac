#include <numeric>

#include "texa/trainer.hpp"

namespace texa::trainer {

std::size_t rollout_length(rng::Stream& rng, std::size_t lo, std::size_t hi) {
  if (lo < 1 || lo > hi) {
    throw ValueError("rollout bounds must satisfy 1 <= lo <= hi, got [" + std::to_string(lo) + ", " +
                     std::to_string(hi) + "]");
  }
  return static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

StatePool::StatePool(std::size_t capacity, std::size_t height, std::size_t width, std::uint64_t seed)
    : h_(height), w_(width), seed_(seed), slots_(capacity) {
  if (capacity == 0) throw ValueError("state pool capacity must be positive");
}

Tensor StatePool::fresh(std::uint64_t key) const { return nca::noise_state(h_, w_, rng::derive_seed(seed_, key)); }

const Tensor& StatePool::at(std::size_t i) {
  auto& slot = slots_.at(i);
  if (!slot) slot = fresh(i);
  return *slot;
}

void StatePool::set(std::size_t i, Tensor state) {
  if (state.shape() != Shape{h_, w_, nca::kChannels}) {
    throw ShapeError("pool state shape " + to_string(state.shape()) + " differs from pool grid");
  }
  slots_.at(i) = std::move(state);
}

void StatePool::reseed(std::size_t i, std::uint64_t key) { slots_.at(i) = fresh(key); }

std::vector<std::size_t> StatePool::sample(std::size_t count, rng::Stream& rng) const {
  const std::size_t n = slots_.size();
  if (count > n) {
    throw ValueError("cannot sample " + std::to_string(count) + " distinct states from a pool of " +
                     std::to_string(n));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(static_cast<std::uint32_t>(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

}  // namespace texa::trainer
