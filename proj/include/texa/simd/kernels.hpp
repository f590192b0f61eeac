#pragma once

// Hot inner loops shared by the float and int8 paths. Every kernel has a
// scalar reference implementation and, where the build and the CPU allow it,
// an AVX2+FMA variant. The variant is chosen once at runtime.
//
// Row contract: every kernel processes rows independently and in the order
// given, so the value produced for one row never depends on which other rows
// are in the same call. Tiled and masked execution rely on this.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace texa::simd {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// Row selection: either rows [0, count) or an explicit index list.
struct Rows {
  const std::uint32_t* index = nullptr;
  std::size_t count = 0;

  static Rows all(std::size_t n) { return {nullptr, n}; }
  static Rows list(std::span<const std::uint32_t> idx) { return {idx.data(), idx.size()}; }
  std::uint32_t operator[](std::size_t i) const {
    return index ? index[i] : static_cast<std::uint32_t>(i);
  }
};

/// out[r, :] = bias + in[r, :] * weight, weight is [in_dim, out_dim] row-major.
/// bias may be null (treated as zero).
using AffineFn = void (*)(const float* in, std::size_t in_dim, const float* weight, const float* bias,
                          std::size_t out_dim, float* out, Rows rows);

/// acc[i, j] += sum over rows r of a[r, i] * b[r, j]; acc is [a_dim, b_dim].
using OuterAccumulateFn = void (*)(const float* a, std::size_t a_dim, const float* b, std::size_t b_dim,
                                   float* acc, Rows rows);

/// Integer affine: out[r, j] = bias[j] + sum_k in[r, k] * w[k, j] in int32.
/// `packed` comes from pack_int16_pairs; in_dim must be even and out_stride a
/// multiple of 8 (padded output columns receive bias-only values).
using QAffineFn = void (*)(const std::int16_t* in, std::size_t in_dim, const std::int16_t* packed,
                           const std::int32_t* bias, std::size_t out_stride, std::int32_t* out, Rows rows);

/// out[i] = (clamp(round(in[i] / scale) + zero_point, qmin, qmax) - zero_point) * scale,
/// rounding halves away from zero. NaN passes through.
using FakeQuantizeFn = void (*)(const float* in, float* out, std::size_t n, float scale, float zero_point, float qmin,
                                float qmax);

struct KernelTable {
  Isa isa;
  AffineFn affine;
  OuterAccumulateFn outer_accumulate;
  QAffineFn qaffine;
  FakeQuantizeFn fake_quantize;
};

bool isa_available(Isa isa);

/// Kernel table for a specific ISA. Throws if the ISA is unavailable.
const KernelTable& kernels_for(Isa isa);

/// Best available table. `TEXA_ISA=scalar` in the environment forces the
/// reference kernels.
const KernelTable& kernels();

/// Output columns rounded up to the integer kernel's vector width.
constexpr std::size_t padded_columns(std::size_t n) { return (n + 7) / 8 * 8; }

/// Interleave an int8 [in_dim, out_dim] matrix as int16 pairs
/// [in_dim/2][padded_columns(out_dim)][2], zero-filling the padding.
std::vector<std::int16_t> pack_int16_pairs(std::span<const std::int8_t> weight, std::size_t in_dim,
                                           std::size_t out_dim);

/// Indices of rows of `m` ([n, dim]) that contain at least one non-zero value.
std::vector<std::uint32_t> nonzero_rows(const float* m, std::size_t n, std::size_t dim);

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // null when not compiled in
}  // namespace detail

}  // namespace texa::simd
