#include <algorithm>
#include <cmath>

#include "texa/runtime.hpp"

namespace texa::runtime {

std::size_t damage(Tensor& state, const DamageShape& shape, DamageMode mode, std::uint64_t seed) {
  require_rank(state, 3, "damage");
  const std::size_t h = state.dim(0), w = state.dim(1), c = state.dim(2);
  const rng::CounterRng gen(rng::derive_seed(seed, 0x444d47));
  std::size_t hit = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      bool inside;
      if (shape.kind == DamageShape::Kind::disc) {
        const double dx = static_cast<double>(x) - shape.cx, dy = static_cast<double>(y) - shape.cy;
        inside = dx * dx + dy * dy <= shape.r * shape.r;
      } else {
        const auto sx = static_cast<std::ptrdiff_t>(x), sy = static_cast<std::ptrdiff_t>(y);
        inside = sx >= shape.x && sy >= shape.y && sx < shape.x + static_cast<std::ptrdiff_t>(shape.w) &&
                 sy < shape.y + static_cast<std::ptrdiff_t>(shape.h);
      }
      if (!inside) continue;
      ++hit;
      const std::size_t cell = y * w + x;
      for (std::size_t ch = 0; ch < c; ++ch)
        state[cell * c + ch] = mode == DamageMode::zero ? 0.0f : gen.noise(cell, static_cast<std::uint32_t>(ch));
    }
  }
  return hit;
}

Tensor expand(const Tensor& state, std::size_t new_h, std::size_t new_w, std::size_t anchor_y, std::size_t anchor_x,
              std::uint64_t seed) {
  require_rank(state, 3, "expand");
  const std::size_t h = state.dim(0), w = state.dim(1), c = state.dim(2);
  if (new_h < h || new_w < w) {
    throw ShapeError("expand cannot shrink " + std::to_string(h) + "x" + std::to_string(w) + " to " +
                     std::to_string(new_h) + "x" + std::to_string(new_w));
  }
  if (anchor_y + h > new_h || anchor_x + w > new_w) {
    throw ShapeError("expand anchor (" + std::to_string(anchor_y) + ", " + std::to_string(anchor_x) +
                     ") places the old grid outside the new one");
  }
  if (new_h == h && new_w == w) return state;
  Tensor out = nca::noise_state(new_h, new_w, rng::derive_seed(seed, 0x455850));
  if (c != out.dim(2)) throw ShapeError("expand expects 12-channel states");
  for (std::size_t y = 0; y < h; ++y)
    std::copy_n(state.raw() + y * w * c, w * c, out.raw() + ((anchor_y + y) * new_w + anchor_x) * c);
  return out;
}

}  // namespace texa::runtime
