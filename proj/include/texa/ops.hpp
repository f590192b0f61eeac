#pragma once

// Forward-only tensor operations. The differentiable wrappers in autodiff.hpp
// call exactly these functions, so a recorded computation and an unrecorded
// one produce bitwise-identical values.

#include <cstdint>
#include <span>
#include <vector>

#include "texa/tensor.hpp"

namespace texa {

enum class Boundary { torus, clamp };

/// Boundary handling per axis (rows, columns).
struct Edges {
  Boundary rows = Boundary::torus;
  Boundary cols = Boundary::torus;

  static constexpr Edges uniform(Boundary b) { return {b, b}; }
};

/// Layout of depthwise convolution output channels.
enum class ChannelOrder {
  interleaved,  // channel c * K + k
  blocked,      // channel k * C + c
};

/// 3x3 depthwise stencil bank. `odd` holds the taps used on odd rows; when it
/// is empty the `even` taps are used everywhere (square grids).
struct Stencil {
  Tensor even;  // [3, 3, K]
  Tensor odd;   // [3, 3, K] or empty

  std::size_t count() const { return even.dim(2); }
  const Tensor& for_row(std::size_t row) const { return (row % 2 == 1 && !odd.empty()) ? odd : even; }
};

namespace ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor clamp(const Tensor& a, float lo, float hi);

/// [H, W, C] -> [H + 2, W + 2, C] with a one-cell halo filled per `edges`.
Tensor pad1(const Tensor& x, Edges edges);

/// For each position of pad1's output, the flat cell index (y * W + x) it was copied from.
std::vector<std::uint32_t> pad1_sources(std::size_t h, std::size_t w, Edges edges);

/// Depthwise 3x3 convolution over an already padded [H + 2, W + 2, C] buffer.
/// `row0` is the global row index of output row 0 (selects odd/even taps).
Tensor depthwise_padded(const Tensor& padded, const Stencil& stencil, ChannelOrder order, std::size_t row0 = 0);

/// Depthwise 3x3 convolution: output channel c*K+k (interleaved) is kernel k
/// applied to input channel c.
Tensor conv2d_depthwise(const Tensor& input, const Stencil& stencil, Edges edges,
                        ChannelOrder order = ChannelOrder::interleaved);

/// Per-pixel affine map over the last axis: [..., A] x [A, B] + [B] -> [..., B].
/// With `rows`, only the listed pixels are computed; the others are zero.
Tensor matmul_pointwise(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        const std::vector<std::uint32_t>* rows = nullptr);

/// Gram matrix of [H, W, C] features normalized by H*W. Exactly symmetric.
Tensor gram(const Tensor& features);

Tensor maxpool2(const Tensor& x);
Tensor avgpool2(const Tensor& x);
Tensor concat_channels(std::span<const Tensor* const> parts);
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end);

/// Dense 2-D convolution with "same" zero padding. weight is [KH, KW, CIN, COUT].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride);

/// Geometry shared by conv2d forward and backward.
struct Conv2dGeometry {
  std::size_t h, w, cin, kh, kw, cout, stride, oh, ow, pad_top, pad_left;
  static Conv2dGeometry of(const Tensor& x, const Tensor& weight, std::size_t stride);
};
/// Patch matrix [OH * OW, KH * KW * CIN] with zero fill outside the image.
Tensor im2col(const Tensor& x, const Conv2dGeometry& g);

/// (x - mean[c]) / std[c] per channel of a channels-last tensor.
Tensor normalize(const Tensor& x, std::span<const float> mean, std::span<const float> std);

/// Rotates the (gx, gy) blocks of a blocked perception tensor [H, W, 4C] by
/// per-cell angle alpha [H, W]: gx' = c gx + s gy, gy' = -s gx + c gy.
/// Cells with alpha exactly 0 are copied unchanged.
Tensor rotate_gradients(const Tensor& perception, const Tensor& alpha, std::size_t channels);

/// out = mask[cell] ? s + ds : s, mask holds one byte per cell of [H, W, C].
Tensor masked_add(const Tensor& s, const Tensor& ds, std::span<const std::uint8_t> mask);

}  // namespace ops
}  // namespace texa
