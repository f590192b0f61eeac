#include "texa/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "texa/simd/kernels.hpp"

namespace texa {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Tensor Gradients::of(const Var& leaf) const {
  auto it = grads_.find(leaf.id());
  if (it != grads_.end()) return it->second;
  return Tensor::zeros(leaf.shape());
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true, true});
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, true});
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::check_owner(const Var& v) const {
  if (!v.valid() || &v.tape() != this) throw std::logic_error("Var belongs to a different tape");
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    check_owner(in);
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || in.requires_grad();
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Gradients Tape::backward(const Var& loss) {
  check_owner(loss);
  if (loss.value().size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  Gradients result;
  result.tape_ = this;
  std::vector<std::vector<float>> grads(nodes_.size());
  grads[loss.id()].assign(1, 1.0f);

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (grads[id].empty() || !node.requires_grad) continue;
    if (node.leaf) {
      result.grads_.emplace(static_cast<std::uint32_t>(id), Tensor(node.value.shape(), std::move(grads[id])));
      continue;
    }
    GradSlots slots;
    for (std::uint32_t in : node.inputs) {
      assert(in < id && "tape inputs must precede their consumers");
      if (!nodes_[in].requires_grad) {
        slots.slots_.push_back(nullptr);
        continue;
      }
      if (grads[in].empty()) grads[in].assign(nodes_[in].value.size(), 0.0f);
      slots.slots_.push_back(grads[in].data());
    }
    const Tensor grad_out(node.value.shape(), std::move(grads[id]));
    node.backward(grad_out, slots);
    grads[id] = {};
  }
  return result;
}

namespace ad {
namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("operands recorded on different tapes");
  return a.tape();
}

void accumulate(float* dst, const Tensor& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

Tensor transpose2d(const Tensor& m) {
  const std::size_t r = m.dim(0), c = m.dim(1);
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t[j * r + i] = m[i * c + j];
  return t;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return same_tape(a, b).record(ops::add(a.value(), b.value()), {a, b}, [](const Tensor& g, const GradSlots& s) {
    if (float* ga = s.grad(0)) accumulate(ga, g);
    if (float* gb = s.grad(1)) accumulate(gb, g);
  });
}

Var sub(const Var& a, const Var& b) {
  return same_tape(a, b).record(ops::sub(a.value(), b.value()), {a, b}, [](const Tensor& g, const GradSlots& s) {
    if (float* ga = s.grad(0)) accumulate(ga, g);
    if (float* gb = s.grad(1))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Var mul(const Var& a, const Var& b) {
  return same_tape(a, b).record(ops::mul(a.value(), b.value()), {a, b}, [a, b](const Tensor& g, const GradSlots& s) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (float* ga = s.grad(0))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    if (float* gb = s.grad(1))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
  });
}

Var scale(const Var& a, float k) {
  return a.tape().record(ops::scale(a.value(), k), {a}, [k](const Tensor& g, const GradSlots& s) {
    if (float* ga = s.grad(0))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * k;
  });
}

Var sum(const Var& a) {
  return a.tape().record(ops::sum(a.value()), {a}, [n = a.value().size()](const Tensor& g, const GradSlots& s) {
    if (float* ga = s.grad(0))
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
  });
}

Var mean(const Var& a) {
  return a.tape().record(ops::mean(a.value()), {a}, [n = a.value().size()](const Tensor& g, const GradSlots& s) {
    if (float* ga = s.grad(0)) {
      const float d = g[0] / static_cast<float>(n);
      for (std::size_t i = 0; i < n; ++i) ga[i] += d;
    }
  });
}

Var relu(const Var& a) {
  return a.tape().record(ops::relu(a.value()), {a}, [a](const Tensor& g, const GradSlots& s) {
    const Tensor& x = a.value();
    if (float* ga = s.grad(0))
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] > 0.0f) ga[i] += g[i];
  });
}

Var clamp(const Var& a, float lo, float hi) {
  return a.tape().record(ops::clamp(a.value(), lo, hi), {a}, [a, lo, hi](const Tensor& g, const GradSlots& s) {
    const Tensor& x = a.value();
    if (float* ga = s.grad(0))
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] >= lo && x[i] <= hi) ga[i] += g[i];
  });
}

Var conv2d_depthwise(const Var& input, const Stencil& stencil, Edges edges, ChannelOrder order) {
  const Tensor& x = input.value();
  Tensor out = ops::conv2d_depthwise(x, stencil, edges, order);
  auto bank = std::make_shared<const Stencil>(stencil);
  return input.tape().record(std::move(out), {input}, [bank, edges, order, shape = x.shape()](
                                                          const Tensor& g, const GradSlots& s) {
    float* gx = s.grad(0);
    if (!gx) return;
    const std::size_t h = shape[0], w = shape[1], c = shape[2], k = bank->count();
    const auto src = ops::pad1_sources(h, w, edges);
    for (std::size_t y = 0; y < h; ++y) {
      const float* taps = bank->for_row(y).raw();
      for (std::size_t xx = 0; xx < w; ++xx) {
        const float* gp = g.raw() + (y * w + xx) * c * k;
        for (std::size_t dy = 0; dy < 3; ++dy) {
          for (std::size_t dx = 0; dx < 3; ++dx) {
            float* dst = gx + static_cast<std::size_t>(src[(y + dy) * (w + 2) + xx + dx]) * c;
            const float* wt = taps + (dy * 3 + dx) * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
              const float wk = wt[kk];
              if (order == ChannelOrder::blocked) {
                for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += wk * gp[kk * c + ch];
              } else {
                for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += wk * gp[ch * k + kk];
              }
            }
          }
        }
      }
    }
  });
}

Var matmul_pointwise(const Var& input, const Var& weight, const Var& bias,
                     std::shared_ptr<const std::vector<std::uint32_t>> rows) {
  Tape& tape = same_tape(input, weight);
  same_tape(input, bias);
  Tensor out = ops::matmul_pointwise(input.value(), weight.value(), bias.value(), rows.get());
  return tape.record(std::move(out), {input, weight, bias}, [input, weight, rows](const Tensor& g,
                                                                                  const GradSlots& s) {
    const Tensor& x = input.value();
    const Tensor& w = weight.value();
    const std::size_t a = w.dim(0), b = w.dim(1), n = x.size() / a;
    const auto& k = simd::kernels();
    std::vector<std::uint32_t> nz;
    if (rows) {
      for (std::uint32_t r : *rows)
        for (std::size_t j = 0; j < b; ++j)
          if (g[r * b + j] != 0.0f) {
            nz.push_back(r);
            break;
          }
    } else {
      nz = simd::nonzero_rows(g.raw(), n, b);
    }
    const auto sel = simd::Rows::list(nz);
    if (float* gx = s.grad(0)) {
      const Tensor wt = transpose2d(w);
      std::vector<float> tmp(x.size(), 0.0f);
      k.affine(g.raw(), b, wt.raw(), nullptr, a, tmp.data(), sel);
      for (std::uint32_t r : nz)
        for (std::size_t j = 0; j < a; ++j) gx[r * a + j] += tmp[r * a + j];
    }
    if (float* gw = s.grad(1)) k.outer_accumulate(x.raw(), a, g.raw(), b, gw, sel);
    if (float* gb = s.grad(2))
      for (std::uint32_t r : nz)
        for (std::size_t j = 0; j < b; ++j) gb[j] += g[r * b + j];
  });
}

Var gram(const Var& features) {
  return features.tape().record(ops::gram(features.value()), {features}, [features](const Tensor& g,
                                                                                     const GradSlots& s) {
    float* gf = s.grad(0);
    if (!gf) return;
    const Tensor& f = features.value();
    const std::size_t hw = f.dim(0) * f.dim(1), c = f.dim(2);
    const float inv = 1.0f / static_cast<float>(hw);
    Tensor sym({c, c});
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) sym[i * c + j] = (g[i * c + j] + g[j * c + i]) * inv;
    std::vector<float> tmp(f.size(), 0.0f);
    simd::kernels().affine(f.raw(), c, sym.raw(), nullptr, c, tmp.data(), simd::Rows::all(hw));
    for (std::size_t i = 0; i < tmp.size(); ++i) gf[i] += tmp[i];
  });
}

Var maxpool2(const Var& x) {
  return x.tape().record(ops::maxpool2(x.value()), {x}, [x](const Tensor& g, const GradSlots& s) {
    float* gx = s.grad(0);
    if (!gx) return;
    const Tensor& in = x.value();
    const std::size_t w = in.dim(1), c = in.dim(2), oh = g.dim(0), ow = g.dim(1);
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        for (std::size_t ch = 0; ch < c; ++ch) {
          // Route to the first maximal element in (0,0), (0,1), (1,0), (1,1) order.
          std::size_t best = (2 * y * w + 2 * xx) * c + ch;
          for (std::size_t d : {(2 * y * w + 2 * xx + 1) * c + ch, ((2 * y + 1) * w + 2 * xx) * c + ch,
                                ((2 * y + 1) * w + 2 * xx + 1) * c + ch})
            if (in[d] > in[best]) best = d;
          gx[best] += g[(y * ow + xx) * c + ch];
        }
  });
}

Var avgpool2(const Var& x) {
  return x.tape().record(ops::avgpool2(x.value()), {x}, [shape = x.shape()](const Tensor& g, const GradSlots& s) {
    float* gx = s.grad(0);
    if (!gx) return;
    const std::size_t w = shape[1], c = shape[2], oh = g.dim(0), ow = g.dim(1);
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const float d = g[(y * ow + xx) * c + ch] * 0.25f;
          gx[(2 * y * w + 2 * xx) * c + ch] += d;
          gx[(2 * y * w + 2 * xx + 1) * c + ch] += d;
          gx[((2 * y + 1) * w + 2 * xx) * c + ch] += d;
          gx[((2 * y + 1) * w + 2 * xx + 1) * c + ch] += d;
        }
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  std::vector<const Tensor*> values;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    values.push_back(&p.value());
    widths.push_back(p.shape().empty() ? 0 : p.shape().back());
  }
  Tensor out = ops::concat_channels(values);
  return parts[0].tape().record(std::move(out), parts, [widths](const Tensor& g, const GradSlots& s) {
    const std::size_t total = g.shape().back(), rows = g.size() / total;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (float* gi = s.grad(i))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[i]; ++j) gi[r * widths[i] + j] += g[r * total + offset + j];
      offset += widths[i];
    }
  });
}

Var slice_channels(const Var& x, std::size_t begin, std::size_t end) {
  return x.tape().record(ops::slice_channels(x.value(), begin, end), {x},
                         [begin, end, c = x.shape().back()](const Tensor& g, const GradSlots& s) {
                           float* gx = s.grad(0);
                           if (!gx) return;
                           const std::size_t n = end - begin, rows = g.size() / n;
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t j = 0; j < n; ++j) gx[r * c + begin + j] += g[r * n + j];
                         });
}

Var conv2d(const Var& x, const Tensor& weight, const Tensor& bias, std::size_t stride) {
  auto w = std::make_shared<const Tensor>(weight);
  const auto geom = ops::Conv2dGeometry::of(x.value(), weight, stride);
  return x.tape().record(ops::conv2d(x.value(), weight, bias, stride), {x}, [w, geom](const Tensor& g,
                                                                                       const GradSlots& s) {
    float* gx = s.grad(0);
    if (!gx) return;
    const std::size_t patch = geom.kh * geom.kw * geom.cin;
    const Tensor wt = transpose2d(w->reshaped({patch, geom.cout}));
    const auto nz = simd::nonzero_rows(g.raw(), geom.oh * geom.ow, geom.cout);
    std::vector<float> cols(geom.oh * geom.ow * patch, 0.0f);
    simd::kernels().affine(g.raw(), geom.cout, wt.raw(), nullptr, patch, cols.data(), simd::Rows::list(nz));
    for (std::uint32_t r : nz) {
      const std::size_t oy = r / geom.ow, ox = r % geom.ow;
      const float* src = cols.data() + r * patch;
      for (std::size_t ky = 0; ky < geom.kh; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * geom.stride + ky) - static_cast<std::ptrdiff_t>(geom.pad_top);
        for (std::size_t kx = 0; kx < geom.kw; ++kx, src += geom.cin) {
          const auto ix =
              static_cast<std::ptrdiff_t>(ox * geom.stride + kx) - static_cast<std::ptrdiff_t>(geom.pad_left);
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(geom.h) ||
              ix >= static_cast<std::ptrdiff_t>(geom.w))
            continue;
          float* dst = gx + (static_cast<std::size_t>(iy) * geom.w + static_cast<std::size_t>(ix)) * geom.cin;
          for (std::size_t ch = 0; ch < geom.cin; ++ch) dst[ch] += src[ch];
        }
      }
    }
  });
}

Var normalize(const Var& x, std::span<const float> mean_, std::span<const float> std_) {
  std::vector<float> sd(std_.begin(), std_.end());
  return x.tape().record(ops::normalize(x.value(), mean_, std_), {x}, [sd](const Tensor& g, const GradSlots& s) {
    if (float* gx = s.grad(0))
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / sd[i % sd.size()];
  });
}

Var rotate_gradients(const Var& perception, const Tensor& alpha, std::size_t channels) {
  auto angles = std::make_shared<const Tensor>(alpha);
  return perception.tape().record(
      ops::rotate_gradients(perception.value(), alpha, channels), {perception},
      [angles, channels](const Tensor& g, const GradSlots& s) {
        float* gp = s.grad(0);
        if (!gp) return;
        const std::size_t pc = 4 * channels, cells = angles->size();
        for (std::size_t i = 0; i < cells; ++i) {
          const float a = (*angles)[i];
          const float* gi = g.raw() + i * pc;
          float* go = gp + i * pc;
          if (a == 0.0f) {
            for (std::size_t j = 0; j < pc; ++j) go[j] += gi[j];
            continue;
          }
          const float c = std::cos(a), sn = std::sin(a);
          for (std::size_t ch = 0; ch < channels; ++ch) {
            go[ch] += gi[ch];
            go[3 * channels + ch] += gi[3 * channels + ch];
            const float gx = gi[channels + ch], gy = gi[2 * channels + ch];
            go[channels + ch] += c * gx - sn * gy;
            go[2 * channels + ch] += sn * gx + c * gy;
          }
        }
      });
}

Var masked_add(const Var& s, const Var& ds, std::vector<std::uint8_t> mask) {
  Tensor out = ops::masked_add(s.value(), ds.value(), mask);
  return same_tape(s, ds).record(std::move(out), {s, ds}, [mask = std::move(mask)](const Tensor& g,
                                                                                      const GradSlots& slots) {
    if (float* gs = slots.grad(0)) accumulate(gs, g);
    if (float* gd = slots.grad(1)) {
      const std::size_t c = g.size() / mask.size();
      for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i])
          for (std::size_t ch = 0; ch < c; ++ch) gd[i * c + ch] += g[i * c + ch];
    }
  });
}

Var fake_quantize(const Var& x, const QuantGrid& grid) {
  return x.tape().record(ops::fake_quantize(x.value(), grid), {x}, [x, lo = grid.lo(), hi = grid.hi()](
                                                                         const Tensor& g, const GradSlots& s) {
    const Tensor& in = x.value();
    if (float* gx = s.grad(0))
      for (std::size_t i = 0; i < g.size(); ++i)
        if (in[i] >= lo && in[i] <= hi) gx[i] += g[i];
  });
}

}  // namespace ad
}  // namespace texa
