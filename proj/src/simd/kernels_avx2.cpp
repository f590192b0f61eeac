// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>

#include "texa/simd/kernels.hpp"

namespace texa::simd {
namespace {

inline __m256i tail_mask(int lanes) {
  alignas(32) static const std::int32_t table[16] = {-1, -1, -1, -1, -1, -1, -1, -1, 0, 0, 0, 0, 0, 0, 0, 0};
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(table + 8 - lanes));
}

inline __m256 load_part(const float* p, int lanes, __m256i mask) {
  return lanes == 8 ? _mm256_loadu_ps(p) : _mm256_maskload_ps(p, mask);
}

inline void store_part(float* p, __m256 v, int lanes, __m256i mask) {
  if (lanes == 8) {
    _mm256_storeu_ps(p, v);
  } else {
    _mm256_maskstore_ps(p, mask, v);
  }
}

// R rows x NV vectors of output columns starting at j0. The last vector holds
// `last` valid lanes. Per-row arithmetic is the same for R = 1 and R = 2.
template <int R, int NV>
inline void affine_block(const float* const* x, std::size_t in_dim, const float* weight, const float* bias,
                         std::size_t out_dim, float* const* y, std::size_t j0, int last) {
  const __m256i mask = tail_mask(last);
  __m256 acc[R][NV];
  for (int v = 0; v < NV; ++v) {
    const int lanes = v == NV - 1 ? last : 8;
    const __m256 b = bias ? load_part(bias + j0 + 8 * v, lanes, mask) : _mm256_setzero_ps();
    for (int r = 0; r < R; ++r) acc[r][v] = b;
  }
  for (std::size_t k = 0; k < in_dim; ++k) {
    const float* wk = weight + k * out_dim + j0;
    __m256 xb[R];
    for (int r = 0; r < R; ++r) xb[r] = _mm256_broadcast_ss(x[r] + k);
    for (int v = 0; v < NV; ++v) {
      const __m256 w = load_part(wk + 8 * v, v == NV - 1 ? last : 8, mask);
      for (int r = 0; r < R; ++r) acc[r][v] = _mm256_fmadd_ps(xb[r], w, acc[r][v]);
    }
  }
  for (int v = 0; v < NV; ++v) {
    for (int r = 0; r < R; ++r) store_part(y[r] + j0 + 8 * v, acc[r][v], v == NV - 1 ? last : 8, mask);
  }
}

template <int R>
void affine_rows(const float* const* x, std::size_t in_dim, const float* weight, const float* bias,
                 std::size_t out_dim, float* const* y) {
  std::size_t j0 = 0;
  while (j0 < out_dim) {
    const std::size_t remaining = out_dim - j0;
    const std::size_t vecs = (remaining + 7) / 8;
    const int last = static_cast<int>(remaining - (std::min<std::size_t>(vecs, 6) - 1) * 8);
    if (vecs >= 6) {
      affine_block<R, 6>(x, in_dim, weight, bias, out_dim, y, j0, vecs == 6 ? last : 8);
      j0 += 48;
    } else if (vecs >= 4) {
      const int l = vecs == 4 ? static_cast<int>(remaining - 24) : 8;
      affine_block<R, 4>(x, in_dim, weight, bias, out_dim, y, j0, l);
      j0 += 32;
    } else if (vecs >= 2) {
      const int l = vecs == 2 ? static_cast<int>(remaining - 8) : 8;
      affine_block<R, 2>(x, in_dim, weight, bias, out_dim, y, j0, l);
      j0 += 16;
    } else {
      affine_block<R, 1>(x, in_dim, weight, bias, out_dim, y, j0, static_cast<int>(remaining));
      j0 += 8;
    }
  }
}

void affine_avx2(const float* in, std::size_t in_dim, const float* weight, const float* bias,
                 std::size_t out_dim, float* out, Rows rows) {
  std::size_t i = 0;
  for (; i + 1 < rows.count; i += 2) {
    const std::size_t r0 = rows[i], r1 = rows[i + 1];
    const float* x[2] = {in + r0 * in_dim, in + r1 * in_dim};
    float* y[2] = {out + r0 * out_dim, out + r1 * out_dim};
    affine_rows<2>(x, in_dim, weight, bias, out_dim, y);
  }
  if (i < rows.count) {
    const std::size_t r0 = rows[i];
    const float* x[1] = {in + r0 * in_dim};
    float* y[1] = {out + r0 * out_dim};
    affine_rows<1>(x, in_dim, weight, bias, out_dim, y);
  }
}

// acc[p0..p0+NI, q0..q0+16) += sum_r a[r, p] * b[r, q]
template <int NI>
void outer_block(const float* a, std::size_t a_dim, const float* b, std::size_t b_dim, float* acc, Rows rows,
                 std::size_t p0, std::size_t q0, int lanes0, int lanes1) {
  const __m256i m0 = tail_mask(lanes0);
  const __m256i m1 = tail_mask(lanes1 > 0 ? lanes1 : 1);
  const bool two = lanes1 > 0;
  __m256 c0[NI], c1[NI];
  for (int i = 0; i < NI; ++i) {
    float* row = acc + (p0 + i) * b_dim + q0;
    c0[i] = load_part(row, lanes0, m0);
    c1[i] = two ? load_part(row + 8, lanes1, m1) : _mm256_setzero_ps();
  }
  for (std::size_t t = 0; t < rows.count; ++t) {
    const std::size_t r = rows[t];
    const float* br = b + r * b_dim + q0;
    const float* ar = a + r * a_dim + p0;
    const __m256 b0 = load_part(br, lanes0, m0);
    if (two) {
      const __m256 b1 = load_part(br + 8, lanes1, m1);
      for (int i = 0; i < NI; ++i) {
        const __m256 ai = _mm256_broadcast_ss(ar + i);
        c0[i] = _mm256_fmadd_ps(ai, b0, c0[i]);
        c1[i] = _mm256_fmadd_ps(ai, b1, c1[i]);
      }
    } else {
      for (int i = 0; i < NI; ++i) c0[i] = _mm256_fmadd_ps(_mm256_broadcast_ss(ar + i), b0, c0[i]);
    }
  }
  for (int i = 0; i < NI; ++i) {
    float* row = acc + (p0 + i) * b_dim + q0;
    store_part(row, c0[i], lanes0, m0);
    if (two) store_part(row + 8, c1[i], lanes1, m1);
  }
}

void outer_accumulate_avx2(const float* a, std::size_t a_dim, const float* b, std::size_t b_dim, float* acc,
                           Rows rows) {
  for (std::size_t q0 = 0; q0 < b_dim; q0 += 16) {
    const std::size_t rem = b_dim - q0;
    const int lanes0 = static_cast<int>(std::min<std::size_t>(rem, 8));
    const int lanes1 = rem > 8 ? static_cast<int>(std::min<std::size_t>(rem - 8, 8)) : 0;
    std::size_t p0 = 0;
    for (; p0 + 4 <= a_dim; p0 += 4) outer_block<4>(a, a_dim, b, b_dim, acc, rows, p0, q0, lanes0, lanes1);
    for (; p0 < a_dim; ++p0) outer_block<1>(a, a_dim, b, b_dim, acc, rows, p0, q0, lanes0, lanes1);
  }
}

void qaffine_avx2(const std::int16_t* in, std::size_t in_dim, const std::int16_t* packed,
                  const std::int32_t* bias, std::size_t out_stride, std::int32_t* out, Rows rows) {
  const std::size_t nv = out_stride / 8;
  for (std::size_t i = 0; i < rows.count; ++i) {
    const std::size_t r = rows[i];
    const std::int16_t* x = in + r * in_dim;
    std::int32_t* y = out + r * out_stride;
    for (std::size_t v0 = 0; v0 < nv; v0 += 12) {
      const std::size_t nb = std::min<std::size_t>(12, nv - v0);
      __m256i acc[12];
      for (std::size_t v = 0; v < nb; ++v)
        acc[v] = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(bias + 8 * (v0 + v)));
      for (std::size_t k = 0; k < in_dim / 2; ++k) {
        std::int32_t pair;
        __builtin_memcpy(&pair, x + 2 * k, sizeof(pair));
        const __m256i xb = _mm256_set1_epi32(pair);
        const std::int16_t* w = packed + (k * out_stride + 8 * v0) * 2;
        for (std::size_t v = 0; v < nb; ++v) {
          const __m256i wv = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(w + 16 * v));
          acc[v] = _mm256_add_epi32(acc[v], _mm256_madd_epi16(xb, wv));
        }
      }
      for (std::size_t v = 0; v < nb; ++v)
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(y + 8 * (v0 + v)), acc[v]);
    }
  }
}

// Truncate, then step away from zero when the dropped fraction is at least
// one half. Matches std::round for every finite input.
inline __m256 round_half_away(__m256 y) {
  const __m256 t = _mm256_round_ps(y, _MM_FROUND_TO_ZERO | _MM_FROUND_NO_EXC);
  const __m256 frac = _mm256_sub_ps(y, t);
  const __m256 one = _mm256_set1_ps(1.0f);
  const __m256 up = _mm256_and_ps(_mm256_cmp_ps(frac, _mm256_set1_ps(0.5f), _CMP_GE_OQ), one);
  const __m256 down = _mm256_and_ps(_mm256_cmp_ps(frac, _mm256_set1_ps(-0.5f), _CMP_LE_OQ), one);
  return _mm256_sub_ps(_mm256_add_ps(t, up), down);
}

void fake_quantize_avx2(const float* in, float* out, std::size_t n, float scale, float zero_point, float qmin,
                        float qmax) {
  const __m256 s = _mm256_set1_ps(scale), zp = _mm256_set1_ps(zero_point);
  const __m256 lo = _mm256_set1_ps(qmin), hi = _mm256_set1_ps(qmax);
  for (std::size_t i = 0; i < n; i += 8) {
    const int lanes = static_cast<int>(std::min<std::size_t>(8, n - i));
    const __m256i mask = tail_mask(lanes);
    const __m256 x = load_part(in + i, lanes, mask);
    __m256 q = _mm256_add_ps(round_half_away(_mm256_div_ps(x, s)), zp);
    // operand order keeps NaN: max/min return the second operand when either is NaN
    q = _mm256_min_ps(hi, _mm256_max_ps(lo, q));
    store_part(out + i, _mm256_mul_ps(_mm256_sub_ps(q, zp), s), lanes, mask);
  }
}

}  // namespace

namespace detail {
const KernelTable* avx2_table() {
  static const KernelTable table{Isa::avx2, affine_avx2, outer_accumulate_avx2, qaffine_avx2,
                                 fake_quantize_avx2};
  return &table;
}
}  // namespace detail

}  // namespace texa::simd
