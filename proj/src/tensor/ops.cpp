#include "texa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "texa/simd/kernels.hpp"

namespace texa::ops {
namespace {

template <class F>
Tensor binary(const Tensor& a, const Tensor& b, const char* what, F f) {
  require_same_shape(a, b, what);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

std::size_t wrap_or_clamp(std::ptrdiff_t i, std::size_t n, Boundary b) {
  const auto sn = static_cast<std::ptrdiff_t>(n);
  if (b == Boundary::torus) return static_cast<std::size_t>(((i % sn) + sn) % sn);
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, sn - 1));
}

void require_stencil(const Stencil& s) {
  require_rank(s.even, 3, "stencil");
  if (s.even.dim(0) != 3 || s.even.dim(1) != 3) {
    throw ShapeError("stencil window must be 3x3, got " + to_string(s.even.shape()));
  }
  if (!s.odd.empty() && s.odd.shape() != s.even.shape()) {
    throw ShapeError("odd-row stencil shape " + to_string(s.odd.shape()) + " differs from " +
                     to_string(s.even.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](float x, float y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](float x, float y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](float x, float y) { return x * y; });
}

Tensor scale(const Tensor& a, float s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return out;
}

Tensor sum(const Tensor& a) {
  // f64 accumulator for long reductions.
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  return Tensor::scalar(static_cast<float>(acc));
}

Tensor mean(const Tensor& a) {
  if (a.empty()) throw ShapeError("mean of an empty tensor");
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  return Tensor::scalar(static_cast<float>(acc / static_cast<double>(a.size())));
}

Tensor relu(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] > 0.0f ? a[i] : 0.0f;
  return out;
}

Tensor clamp(const Tensor& a, float lo, float hi) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::min(std::max(a[i], lo), hi);
  return out;
}

Tensor pad1(const Tensor& x, Edges edges) {
  require_rank(x, 3, "pad1");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (h == 0 || w == 0) throw ShapeError("pad1: empty spatial extent " + to_string(x.shape()));
  Tensor out({h + 2, w + 2, c});
  for (std::size_t py = 0; py < h + 2; ++py) {
    const std::size_t sy = wrap_or_clamp(static_cast<std::ptrdiff_t>(py) - 1, h, edges.rows);
    for (std::size_t px = 0; px < w + 2; ++px) {
      const std::size_t sx = wrap_or_clamp(static_cast<std::ptrdiff_t>(px) - 1, w, edges.cols);
      std::copy_n(x.raw() + (sy * w + sx) * c, c, out.raw() + (py * (w + 2) + px) * c);
    }
  }
  return out;
}

std::vector<std::uint32_t> pad1_sources(std::size_t h, std::size_t w, Edges edges) {
  std::vector<std::uint32_t> src((h + 2) * (w + 2));
  for (std::size_t py = 0; py < h + 2; ++py) {
    const std::size_t sy = wrap_or_clamp(static_cast<std::ptrdiff_t>(py) - 1, h, edges.rows);
    for (std::size_t px = 0; px < w + 2; ++px) {
      const std::size_t sx = wrap_or_clamp(static_cast<std::ptrdiff_t>(px) - 1, w, edges.cols);
      src[py * (w + 2) + px] = static_cast<std::uint32_t>(sy * w + sx);
    }
  }
  return src;
}

Tensor depthwise_padded(const Tensor& padded, const Stencil& stencil, ChannelOrder order, std::size_t row0) {
  require_rank(padded, 3, "depthwise_padded");
  require_stencil(stencil);
  if (padded.dim(0) < 3 || padded.dim(1) < 3) {
    throw ShapeError("depthwise_padded: padded extent " + to_string(padded.shape()) + " smaller than 3x3");
  }
  const std::size_t h = padded.dim(0) - 2, w = padded.dim(1) - 2, c = padded.dim(2);
  const std::size_t k = stencil.count();
  Tensor out({h, w, c * k});
  std::vector<float> acc(k * c);
  const std::size_t pw = w + 2;
  for (std::size_t y = 0; y < h; ++y) {
    const float* taps = stencil.for_row(row0 + y).raw();
    for (std::size_t x = 0; x < w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0f);
      for (std::size_t dy = 0; dy < 3; ++dy) {
        for (std::size_t dx = 0; dx < 3; ++dx) {
          const float* v = padded.raw() + ((y + dy) * pw + x + dx) * c;
          const float* wt = taps + (dy * 3 + dx) * k;
          for (std::size_t kk = 0; kk < k; ++kk) {
            const float wk = wt[kk];
            float* a = acc.data() + kk * c;
            for (std::size_t ch = 0; ch < c; ++ch) a[ch] += wk * v[ch];
          }
        }
      }
      float* o = out.raw() + (y * w + x) * c * k;
      if (order == ChannelOrder::blocked) {
        std::copy(acc.begin(), acc.end(), o);
      } else {
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t kk = 0; kk < k; ++kk) o[ch * k + kk] = acc[kk * c + ch];
      }
    }
  }
  return out;
}

Tensor conv2d_depthwise(const Tensor& input, const Stencil& stencil, Edges edges, ChannelOrder order) {
  require_rank(input, 3, "conv2d_depthwise");
  return depthwise_padded(pad1(input, edges), stencil, order, 0);
}

Tensor matmul_pointwise(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        const std::vector<std::uint32_t>* rows) {
  require_rank(weight, 2, "matmul_pointwise weight");
  if (input.rank() == 0) throw ShapeError("matmul_pointwise: input must have a channel axis");
  const std::size_t a = input.shape().back();
  if (weight.dim(0) != a) {
    throw ShapeError("matmul_pointwise: input channels " + std::to_string(a) + " != weight rows " +
                     std::to_string(weight.dim(0)));
  }
  const std::size_t b = weight.dim(1);
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != b)) {
    throw ShapeError("matmul_pointwise: bias extent " + to_string(bias.shape()) + " != output channels " +
                     std::to_string(b));
  }
  Shape out_shape = input.shape();
  out_shape.back() = b;
  Tensor out(out_shape);
  const std::size_t n = a == 0 ? 0 : input.size() / a;
  if (rows) {
    for (std::uint32_t r : *rows)
      if (r >= n) throw ShapeError("matmul_pointwise: row " + std::to_string(r) + " out of range " + std::to_string(n));
  }
  simd::kernels().affine(input.raw(), a, weight.raw(), bias.empty() ? nullptr : bias.raw(), b, out.raw(),
                         rows ? simd::Rows::list(*rows) : simd::Rows::all(n));
  return out;
}

Tensor gram(const Tensor& features) {
  require_rank(features, 3, "gram");
  const std::size_t hw = features.dim(0) * features.dim(1), c = features.dim(2);
  if (hw == 0) throw ShapeError("gram: empty spatial extent " + to_string(features.shape()));
  Tensor g({c, c});
  simd::kernels().outer_accumulate(features.raw(), c, features.raw(), c, g.raw(), simd::Rows::all(hw));
  const float inv = 1.0f / static_cast<float>(hw);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = i; j < c; ++j) {
      const float v = g[i * c + j] * inv;
      g[i * c + j] = v;
      g[j * c + i] = v;
    }
  }
  return g;
}

Tensor maxpool2(const Tensor& x) {
  require_rank(x, 3, "maxpool2");
  const std::size_t oh = x.dim(0) / 2, ow = x.dim(1) / 2, c = x.dim(2);
  if (oh == 0 || ow == 0) throw ShapeError("maxpool2: input " + to_string(x.shape()) + " smaller than 2x2");
  Tensor out({oh, ow, c});
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t xx = 0; xx < ow; ++xx)
      for (std::size_t ch = 0; ch < c; ++ch) {
        float m = x.at(2 * y, 2 * xx, ch);
        m = std::max(m, x.at(2 * y, 2 * xx + 1, ch));
        m = std::max(m, x.at(2 * y + 1, 2 * xx, ch));
        m = std::max(m, x.at(2 * y + 1, 2 * xx + 1, ch));
        out.at(y, xx, ch) = m;
      }
  return out;
}

Tensor avgpool2(const Tensor& x) {
  require_rank(x, 3, "avgpool2");
  const std::size_t oh = x.dim(0) / 2, ow = x.dim(1) / 2, c = x.dim(2);
  if (oh == 0 || ow == 0) throw ShapeError("avgpool2: input " + to_string(x.shape()) + " smaller than 2x2");
  Tensor out({oh, ow, c});
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t xx = 0; xx < ow; ++xx)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float s = x.at(2 * y, 2 * xx, ch) + x.at(2 * y, 2 * xx + 1, ch) + x.at(2 * y + 1, 2 * xx, ch) +
                        x.at(2 * y + 1, 2 * xx + 1, ch);
        out.at(y, xx, ch) = s * 0.25f;
      }
  return out;
}

Tensor concat_channels(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Tensor& first = *parts[0];
  if (first.rank() == 0) throw ShapeError("concat_channels: inputs need a channel axis");
  const std::size_t rows = first.size() / std::max<std::size_t>(first.shape().back(), 1);
  std::size_t total = 0;
  for (const Tensor* p : parts) {
    if (p->rank() != first.rank() ||
        !std::equal(p->shape().begin(), p->shape().end() - 1, first.shape().begin())) {
      throw ShapeError("concat_channels: leading extents " + to_string(p->shape()) + " vs " +
                       to_string(first.shape()));
    }
    total += p->shape().back();
  }
  Shape shape = first.shape();
  shape.back() = total;
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    float* o = out.raw() + r * total;
    for (const Tensor* p : parts) {
      const std::size_t c = p->shape().back();
      o = std::copy_n(p->raw() + r * c, c, o);
    }
  }
  return out;
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0) throw ShapeError("slice_channels: input needs a channel axis");
  const std::size_t c = x.shape().back();
  if (begin >= end || end > c) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside channel extent " + std::to_string(c));
  }
  Shape shape = x.shape();
  shape.back() = end - begin;
  Tensor out(shape);
  const std::size_t rows = x.size() / c, n = end - begin;
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.raw() + r * c + begin, n, out.raw() + r * n);
  return out;
}

Conv2dGeometry Conv2dGeometry::of(const Tensor& x, const Tensor& weight, std::size_t stride) {
  require_rank(x, 3, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  if (weight.dim(2) != x.dim(2)) {
    throw ShapeError("conv2d: input channels " + std::to_string(x.dim(2)) + " != weight cin " +
                     std::to_string(weight.dim(2)));
  }
  Conv2dGeometry g{};
  g.h = x.dim(0);
  g.w = x.dim(1);
  g.cin = x.dim(2);
  g.kh = weight.dim(0);
  g.kw = weight.dim(1);
  g.cout = weight.dim(3);
  g.stride = stride;
  g.oh = (g.h + stride - 1) / stride;
  g.ow = (g.w + stride - 1) / stride;
  const std::size_t need_h = (g.oh - 1) * stride + g.kh, need_w = (g.ow - 1) * stride + g.kw;
  g.pad_top = need_h > g.h ? (need_h - g.h) / 2 : 0;
  g.pad_left = need_w > g.w ? (need_w - g.w) / 2 : 0;
  return g;
}

Tensor im2col(const Tensor& x, const Conv2dGeometry& g) {
  const std::size_t patch = g.kh * g.kw * g.cin;
  Tensor cols({g.oh * g.ow, patch});
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      float* dst = cols.raw() + (oy * g.ow + ox) * patch;
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_top);
        for (std::size_t kx = 0; kx < g.kw; ++kx, dst += g.cin) {
          const auto ix =
              static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_left);
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) || ix >= static_cast<std::ptrdiff_t>(g.w))
            continue;  // zero fill
          std::copy_n(x.raw() + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.cin, g.cin,
                      dst);
        }
      }
    }
  }
  return cols;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride) {
  const auto g = Conv2dGeometry::of(x, weight, stride);
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != g.cout)) {
    throw ShapeError("conv2d: bias extent " + to_string(bias.shape()) + " != cout " + std::to_string(g.cout));
  }
  const Tensor cols = im2col(x, g);
  Tensor out({g.oh, g.ow, g.cout});
  simd::kernels().affine(cols.raw(), g.kh * g.kw * g.cin, weight.raw(), bias.empty() ? nullptr : bias.raw(),
                         g.cout, out.raw(), simd::Rows::all(g.oh * g.ow));
  return out;
}

Tensor normalize(const Tensor& x, std::span<const float> mean_, std::span<const float> std_) {
  if (x.rank() == 0) throw ShapeError("normalize: input needs a channel axis");
  const std::size_t c = x.shape().back();
  if (mean_.size() != c || std_.size() != c) {
    throw ShapeError("normalize: statistics length " + std::to_string(mean_.size()) + "/" +
                     std::to_string(std_.size()) + " != channels " + std::to_string(c));
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean_[i % c]) / std_[i % c];
  return out;
}

Tensor rotate_gradients(const Tensor& p, const Tensor& alpha, std::size_t channels) {
  require_rank(p, 3, "rotate_gradients");
  if (p.dim(2) != 4 * channels) {
    throw ShapeError("rotate_gradients: perception channels " + std::to_string(p.dim(2)) + " != 4 * " +
                     std::to_string(channels));
  }
  if (alpha.rank() != 2 || alpha.dim(0) != p.dim(0) || alpha.dim(1) != p.dim(1)) {
    throw ShapeError("rotation field shape " + to_string(alpha.shape()) + " does not match grid " +
                     std::to_string(p.dim(0)) + "x" + std::to_string(p.dim(1)));
  }
  Tensor out = p;
  const std::size_t cells = p.dim(0) * p.dim(1), pc = p.dim(2);
  for (std::size_t i = 0; i < cells; ++i) {
    const float a = alpha[i];
    if (a == 0.0f) continue;
    const float c = std::cos(a), s = std::sin(a);
    const float* src = p.raw() + i * pc;
    float* dst = out.raw() + i * pc;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const float gx = src[channels + ch], gy = src[2 * channels + ch];
      dst[channels + ch] = c * gx + s * gy;
      dst[2 * channels + ch] = -s * gx + c * gy;
    }
  }
  return out;
}

Tensor masked_add(const Tensor& s, const Tensor& ds, std::span<const std::uint8_t> mask) {
  require_same_shape(s, ds, "masked_add");
  if (s.rank() == 0) throw ShapeError("masked_add: needs a channel axis");
  const std::size_t c = s.shape().back(), cells = s.size() / c;
  if (mask.size() != cells) {
    throw ShapeError("masked_add: mask has " + std::to_string(mask.size()) + " cells, state has " +
                     std::to_string(cells));
  }
  Tensor out = s;
  for (std::size_t i = 0; i < cells; ++i) {
    if (!mask[i]) continue;
    for (std::size_t ch = 0; ch < c; ++ch) out[i * c + ch] = s[i * c + ch] + ds[i * c + ch];
  }
  return out;
}

}  // namespace texa::ops
