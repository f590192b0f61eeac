#include <algorithm>
#include <cmath>

#include "texa/simd/kernels.hpp"

namespace texa::simd {
namespace {

void affine_scalar(const float* in, std::size_t in_dim, const float* weight, const float* bias,
                   std::size_t out_dim, float* out, Rows rows) {
  for (std::size_t i = 0; i < rows.count; ++i) {
    const std::size_t r = rows[i];
    const float* x = in + r * in_dim;
    float* y = out + r * out_dim;
    for (std::size_t j = 0; j < out_dim; ++j) y[j] = bias ? bias[j] : 0.0f;
    for (std::size_t k = 0; k < in_dim; ++k) {
      const float xk = x[k];
      const float* wk = weight + k * out_dim;
      for (std::size_t j = 0; j < out_dim; ++j) y[j] += xk * wk[j];
    }
  }
}

void outer_accumulate_scalar(const float* a, std::size_t a_dim, const float* b, std::size_t b_dim,
                             float* acc, Rows rows) {
  for (std::size_t i = 0; i < rows.count; ++i) {
    const std::size_t r = rows[i];
    const float* ar = a + r * a_dim;
    const float* br = b + r * b_dim;
    for (std::size_t p = 0; p < a_dim; ++p) {
      const float ap = ar[p];
      float* accp = acc + p * b_dim;
      for (std::size_t q = 0; q < b_dim; ++q) accp[q] += ap * br[q];
    }
  }
}

void qaffine_scalar(const std::int16_t* in, std::size_t in_dim, const std::int16_t* packed,
                    const std::int32_t* bias, std::size_t out_stride, std::int32_t* out, Rows rows) {
  for (std::size_t i = 0; i < rows.count; ++i) {
    const std::size_t r = rows[i];
    const std::int16_t* x = in + r * in_dim;
    std::int32_t* y = out + r * out_stride;
    for (std::size_t j = 0; j < out_stride; ++j) y[j] = bias[j];
    for (std::size_t k = 0; k < in_dim / 2; ++k) {
      const std::int32_t x0 = x[2 * k];
      const std::int32_t x1 = x[2 * k + 1];
      const std::int16_t* w = packed + k * out_stride * 2;
      for (std::size_t j = 0; j < out_stride; ++j) y[j] += x0 * w[2 * j] + x1 * w[2 * j + 1];
    }
  }
}

void fake_quantize_scalar(const float* in, float* out, std::size_t n, float scale, float zero_point, float qmin,
                          float qmax) {
  for (std::size_t i = 0; i < n; ++i) {
    const float q = std::clamp(std::round(in[i] / scale) + zero_point, qmin, qmax);
    out[i] = (q - zero_point) * scale;
  }
}

}  // namespace

namespace detail {
const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar, affine_scalar, outer_accumulate_scalar, qaffine_scalar,
                                 fake_quantize_scalar};
  return table;
}
}  // namespace detail

}  // namespace texa::simd
