#pragma once

#include <cstdint>

#include "texa/tensor.hpp"

namespace texa {

/// Affine 2^bits-level grid with a nudged zero point, so 0 is always exactly
/// representable. Codes are unsigned in [0, 2^bits - 1]; the real value of code
/// q is (q - zero_point) * scale.
struct QuantGrid {
  float scale = 1.0f;
  std::int32_t zero_point = 0;
  std::int32_t qmin = 0;
  std::int32_t qmax = 255;

  /// Grid covering [lo, hi]. Throws ValueError unless lo < hi and both are finite.
  static QuantGrid from_range(float lo, float hi, int bits = 8);
  /// Restricted symmetric grid: codes 1 .. 2^bits - 1 around zero point 2^(bits-1),
  /// so +-max_abs are both exact levels. Throws ValueError unless max_abs > 0.
  static QuantGrid symmetric(float max_abs, int bits = 8);

  float lo() const { return static_cast<float>(qmin - zero_point) * scale; }
  float hi() const { return static_cast<float>(qmax - zero_point) * scale; }

  std::int32_t code(float x) const;
  float value(std::int32_t code) const { return static_cast<float>(code - zero_point) * scale; }
  /// Round to the nearest grid level after clamping into the grid's range.
  float apply(float x) const { return value(code(x)); }
  bool on_grid(float x) const { return apply(x) == x; }
};

/// The state band [-S, S] and its 8-bit grid (restricted symmetric, so +-S are levels).
inline constexpr float kStateBand = 3.0f;
QuantGrid state_grid();

namespace ops {
/// Forward of fake quantization: every element rounded onto `grid`.
Tensor fake_quantize(const Tensor& x, const QuantGrid& grid);
}  // namespace ops

}  // namespace texa
