#include <algorithm>
#include <cmath>

#include "texa/nca.hpp"

namespace texa::nca {

NcaParams NcaParams::zeros() {
  return {Tensor({kPerception, kHidden}), Tensor({kHidden}), Tensor({kHidden, kChannels}), Tensor({kChannels})};
}

NcaParams NcaParams::init(std::uint64_t seed) {
  NcaParams p = zeros();
  const float limit = std::sqrt(6.0f / static_cast<float>(kPerception));
  rng::Stream stream(rng::derive_seed(seed, 0x1417));
  for (float& v : p.w0.mutable_data()) v = (2.0f * rng::unit_float(stream.next_u32()) - 1.0f) * limit;
  return p;
}

bool NcaParams::all_finite() const {
  return w0.all_finite() && b0.all_finite() && w1.all_finite() && b1.all_finite();
}

void NcaParams::validate() const {
  const NcaParams ref = zeros();
  const char* names[] = {"W0", "b0", "W1", "b1"};
  const auto mine = tensors();
  const auto want = ref.tensors();
  for (std::size_t i = 0; i < 4; ++i) {
    if (mine[i]->shape() != want[i]->shape()) {
      throw ShapeError(std::string(names[i]) + " has shape " + to_string(mine[i]->shape()) + ", expected " +
                       to_string(want[i]->shape()));
    }
  }
  if (!all_finite()) throw ValueError("parameters contain non-finite values");
}

namespace {
float max_abs(const Tensor& t) {
  float m = 0.0f;
  for (float v : t.data()) m = std::max(m, std::fabs(v));
  return m;
}
}  // namespace

QuantGrid weight_grid(float max_abs_value) {
  return QuantGrid::symmetric(max_abs_value > 0.0f ? max_abs_value : 1.0f);
}

QuantGrid hidden_grid(float max) { return QuantGrid::from_range(0.0f, max); }

QatRanges QatRanges::of(const NcaParams& p) {
  return {max_abs(p.w0), max_abs(p.b0), max_abs(p.w1), max_abs(p.b1), -kStateBand, kStateBand};
}

NcaParams QatRanges::apply(const NcaParams& p) const {
  return {ops::fake_quantize(p.w0, weight_grid(w0)), ops::fake_quantize(p.b0, weight_grid(b0)),
          ops::fake_quantize(p.w1, weight_grid(w1)), ops::fake_quantize(p.b1, weight_grid(b1))};
}

Tensor noise_state(std::size_t h, std::size_t w, std::uint64_t seed) {
  Tensor s({h, w, kChannels});
  const rng::CounterRng gen(seed);
  float* out = s.raw();
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::uint32_t blk = 0; blk < kChannels / 4; ++blk) {
      const auto b = gen.block(rng::Purpose::noise, i, blk);
      for (std::size_t l = 0; l < 4; ++l) out[i * kChannels + blk * 4 + l] = rng::unit_float(b[l]);
    }
  }
  return s;
}

std::vector<std::uint8_t> UpdateMask::bits(std::uint64_t step, std::size_t h, std::size_t w) const {
  return bits(step, 0, 0, h, w, w);
}

std::vector<std::uint8_t> UpdateMask::bits(std::uint64_t step, std::size_t y0, std::size_t x0, std::size_t h,
                                           std::size_t w, std::size_t grid_w) const {
  std::vector<std::uint8_t> out(h * w);
  const rng::CounterRng gen(seed);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      out[y * w + x] = gen.mask_bit(step, (y0 + y) * grid_w + x0 + x, rate) ? 1 : 0;
  return out;
}

std::vector<std::uint32_t> active_cells(std::span<const std::uint8_t> mask) {
  std::vector<std::uint32_t> idx;
  idx.reserve(mask.size() / 2 + 1);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(static_cast<std::uint32_t>(i));
  return idx;
}

DivergenceError::DivergenceError(std::size_t step, const std::string& what)
    : std::runtime_error("diverged at step " + std::to_string(step) + ": " + what), step_(step) {}

}  // namespace texa::nca
