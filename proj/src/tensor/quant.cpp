#include "texa/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "texa/simd/kernels.hpp"

namespace texa {

QuantGrid QuantGrid::from_range(float lo, float hi, int bits) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw ValueError("invalid quantization range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  if (bits < 2 || bits > 16) throw ValueError("quantization bits must be in [2, 16]");
  lo = std::min(lo, 0.0f);
  hi = std::max(hi, 0.0f);
  QuantGrid g;
  g.qmin = 0;
  g.qmax = (1 << bits) - 1;
  g.scale = (hi - lo) / static_cast<float>(g.qmax - g.qmin);
  const float zp_from_min = static_cast<float>(g.qmin) - lo / g.scale;
  g.zero_point = static_cast<std::int32_t>(std::clamp(std::round(zp_from_min), static_cast<float>(g.qmin),
                                                      static_cast<float>(g.qmax)));
  return g;
}

QuantGrid QuantGrid::symmetric(float max_abs, int bits) {
  if (!std::isfinite(max_abs) || !(max_abs > 0.0f)) {
    throw ValueError("invalid symmetric quantization range " + std::to_string(max_abs));
  }
  if (bits < 2 || bits > 16) throw ValueError("quantization bits must be in [2, 16]");
  QuantGrid g;
  g.zero_point = 1 << (bits - 1);
  g.qmin = 1;
  g.qmax = (1 << bits) - 1;
  g.scale = max_abs / static_cast<float>(g.zero_point - 1);
  return g;
}

std::int32_t QuantGrid::code(float x) const {
  const float q = std::round(x / scale) + static_cast<float>(zero_point);
  return static_cast<std::int32_t>(std::clamp(q, static_cast<float>(qmin), static_cast<float>(qmax)));
}

QuantGrid state_grid() {
  static const QuantGrid grid = QuantGrid::symmetric(kStateBand, 8);
  return grid;
}

namespace ops {
Tensor fake_quantize(const Tensor& x, const QuantGrid& grid) {
  Tensor out(x.shape());
  simd::kernels().fake_quantize(x.data().data(), out.mutable_data().data(), x.size(), grid.scale,
                                static_cast<float>(grid.zero_point), static_cast<float>(grid.qmin),
                                static_cast<float>(grid.qmax));
  return out;
}
}  // namespace ops

}  // namespace texa
