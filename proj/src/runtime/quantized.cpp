#include <algorithm>
#include <cmath>
#include <limits>

#include "texa/io.hpp"
#include "texa/runtime.hpp"
#include "texa/simd/kernels.hpp"

namespace texa::runtime {
namespace {

constexpr std::size_t kOut1 = simd::padded_columns(nca::kChannels);  // 16

std::int32_t saturate32(std::int64_t v) {
  return static_cast<std::int32_t>(
      std::clamp<std::int64_t>(v, std::numeric_limits<std::int32_t>::min(), std::numeric_limits<std::int32_t>::max()));
}

std::int32_t round_to_i32(double v) {
  if (!std::isfinite(v)) throw ValueError("non-finite value while quantizing biases");
  return saturate32(std::llround(v));
}

// Arithmetic right shift rounding half away from zero.
std::int32_t shift_round(std::int64_t v, int shift) {
  if (shift <= 0) return saturate32(v);
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  return saturate32(v >= 0 ? (v + half) >> shift : -((-v + half) >> shift));
}

std::vector<std::int8_t> weight_codes(const Tensor& w, const QuantGrid& g) {
  std::vector<std::int8_t> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = static_cast<std::int8_t>(g.code(w[i]) - g.zero_point);
  return out;
}

}  // namespace

Requant Requant::of(double real) {
  Requant r;
  if (!(real > 0.0) || !std::isfinite(real)) return r;
  int exp = 0;
  const double frac = std::frexp(real, &exp);
  std::int64_t m = std::llround(frac * 2147483648.0);
  if (m == (std::int64_t{1} << 31)) {
    m /= 2;
    ++exp;
  }
  r.mult = static_cast<std::int32_t>(m);
  r.shift = 31 - exp;
  return r;
}

std::int32_t Requant::apply(std::int32_t x) const {
  const std::int64_t p = static_cast<std::int64_t>(x) * mult;
  if (shift > 62) return 0;
  if (shift < 0) return saturate32(p << std::min(-shift, 31));
  return shift_round(p, shift);
}

nca::NcaParams QuantizedModel::dequantized() const {
  nca::NcaParams p = nca::NcaParams::zeros();
  const float bs0 = state_scale * w0_scale, bs1 = hidden_scale * w1_scale;
  for (std::size_t i = 0; i < w0.size(); ++i) p.w0[i] = static_cast<float>(w0[i]) * w0_scale;
  for (std::size_t i = 0; i < b0.size(); ++i) p.b0[i] = static_cast<float>(b0[i]) * bs0;
  for (std::size_t i = 0; i < w1.size(); ++i) p.w1[i] = static_cast<float>(w1[i]) * w1_scale;
  for (std::size_t i = 0; i < b1.size(); ++i) p.b1[i] = static_cast<float>(b1[i]) * bs1;
  return p;
}

void QuantizedModel::validate() const {
  using nca::kChannels, nca::kHidden, nca::kPerception;
  if (w0.size() != kPerception * kHidden || b0.size() != kHidden || w1.size() != kHidden * kChannels ||
      b1.size() != kChannels) {
    throw ValueError("quantized model tensors have wrong sizes");
  }
  for (float s : {w0_scale, w1_scale, state_scale, hidden_scale})
    if (!std::isfinite(s) || !(s > 0.0f)) throw ValueError("quantized model has an invalid scale");
}

std::vector<Tensor> calibration_states(const nca::Model& model, std::uint64_t seed) {
  RunOptions opt;
  opt.hex = model.geometry == nca::Geometry::hex;
  Runner runner(model, opt, seed);
  runner.reset(64, 64);
  std::vector<Tensor> states{runner.state()};
  runner.run(256, [&](std::size_t, const Tensor& s) { states.push_back(s); }, 32);
  return states;
}

QuantizedModel quantize_model(const nca::Model& model, const std::vector<Tensor>& calibration) {
  model.params.validate();
  const nca::NcaParams& p = model.params;
  const nca::QatRanges ranges = model.qat ? *model.qat : nca::QatRanges::of(p);
  QuantizedModel q;
  q.geometry = model.geometry;
  q.provenance = model.provenance;
  const QuantGrid g0 = nca::weight_grid(ranges.w0);
  const QuantGrid g1 = nca::weight_grid(ranges.w1);
  q.w0 = weight_codes(p.w0, g0);
  q.w1 = weight_codes(p.w1, g1);
  q.w0_scale = g0.scale;
  q.w1_scale = g1.scale;
  q.state_scale = state_grid().scale;

  // Top of the hidden grid: the range QAT simulated, else the largest
  // first-layer activation the quantized state produces on the calibration states.
  float hmax = model.qat ? model.qat->hidden : 0.0f;
  if (hmax == 0.0f) {
    nca::NcaParams deq = p;
    for (std::size_t i = 0; i < q.w0.size(); ++i) deq.w0[i] = static_cast<float>(q.w0[i]) * q.w0_scale;
    const nca::KernelSet kernels = nca::kernels_for(model.geometry);
    for (const Tensor& s : calibration) {
      const Tensor pq = nca::perceive(ops::fake_quantize(s, state_grid()), kernels);
      const Tensor hidden = ops::matmul_pointwise(pq, deq.w0, deq.b0);
      for (float v : hidden.data()) hmax = std::max(hmax, v);
    }
  }
  if (!std::isfinite(hmax)) throw ValueError("calibration produced non-finite activations");
  q.hidden_scale = hmax > 0.0f ? nca::hidden_grid(hmax).scale : 1.0f / 255.0f;

  const double bs0 = static_cast<double>(q.state_scale) * q.w0_scale;
  const double bs1 = static_cast<double>(q.hidden_scale) * q.w1_scale;
  q.b0.resize(nca::kHidden);
  q.b1.resize(nca::kChannels);
  for (std::size_t i = 0; i < q.b0.size(); ++i) q.b0[i] = round_to_i32(p.b0[i] / bs0);
  for (std::size_t i = 0; i < q.b1.size(); ++i) q.b1[i] = round_to_i32(p.b1[i] / bs1);
  q.validate();
  return q;
}

// --- int8 NCAM ---------------------------------------------------------------

std::vector<std::uint8_t> encode_quantized(const QuantizedModel& q) {
  q.validate();
  nlohmann::json h;
  h["format"] = "NCAM";
  h["version"] = 1;
  h["geometry"] = nca::geometry_name(q.geometry);
  h["channels"] = nca::kChannels;
  h["perception"] = nca::kPerception;
  h["hidden"] = nca::kHidden;
  h["state_band"] = kStateBand;
  h["weights_dtype"] = "int8";
  h["tensors"] = nlohmann::json::array({{{"name", "W0"}, {"shape", {nca::kPerception, nca::kHidden}}, {"dtype", "int8"}},
                                        {{"name", "b0"}, {"shape", {nca::kHidden}}, {"dtype", "int32"}},
                                        {{"name", "W1"}, {"shape", {nca::kHidden, nca::kChannels}}, {"dtype", "int8"}},
                                        {{"name", "b1"}, {"shape", {nca::kChannels}}, {"dtype", "int32"}}});
  h["quantization"] = {{"scheme", "int8"},
                       {"w0_scale", q.w0_scale},
                       {"w1_scale", q.w1_scale},
                       {"state_scale", q.state_scale},
                       {"state_codes", {-127, 127}},
                       {"hidden_scale", q.hidden_scale},
                       {"hidden_codes", {0, 255}},
                       {"b0_scale", "state_scale * w0_scale"},
                       {"b1_scale", "hidden_scale * w1_scale"},
                       {"perception_taps", "Q8"},
                       {"rotation", "Q14"},
                       {"rounding", "half_away_from_zero"}};
  h["provenance"] = q.provenance;
  io::Bytes blob;
  io::put_i8(blob, q.w0);
  io::put_i32(blob, q.b0);
  io::put_i8(blob, q.w1);
  io::put_i32(blob, q.b1);
  return io::pack_container(nca::kModelMagic, h, blob);
}

QuantizedModel decode_quantized(std::span<const std::uint8_t> bytes) {
  const io::Container c = io::unpack_container(bytes, nca::kModelMagic);
  const nlohmann::json& h = c.header;
  QuantizedModel q;
  try {
    if (h.at("format") != "NCAM" || h.at("version") != 1) throw io::FormatError("unsupported model format");
    if (h.at("weights_dtype") != "int8") throw io::FormatError("model does not store int8 weights");
    if (h.at("channels").get<std::size_t>() != nca::kChannels) throw io::FormatError("only 12-channel models are supported");
    q.geometry = nca::parse_geometry(h.at("geometry").get<std::string>());
    const auto& qb = h.at("quantization");
    q.w0_scale = qb.at("w0_scale").get<float>();
    q.w1_scale = qb.at("w1_scale").get<float>();
    q.state_scale = qb.at("state_scale").get<float>();
    q.hidden_scale = qb.at("hidden_scale").get<float>();
    q.provenance = h.value("provenance", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError(std::string("malformed model header: ") + e.what());
  } catch (const ValueError& e) {
    throw io::FormatError(e.what());
  }
  std::size_t off = 0;
  q.w0 = io::get_i8(c.payload, off, nca::kPerception * nca::kHidden);
  off += q.w0.size();
  q.b0 = io::get_i32(c.payload, off, nca::kHidden);
  off += q.b0.size() * 4;
  q.w1 = io::get_i8(c.payload, off, nca::kHidden * nca::kChannels);
  off += q.w1.size();
  q.b1 = io::get_i32(c.payload, off, nca::kChannels);
  off += q.b1.size() * 4;
  if (off != c.payload.size()) throw io::FormatError("int8 model blob has trailing or missing bytes");
  try {
    q.validate();
  } catch (const ValueError& e) {
    throw io::FormatError(e.what());
  }
  return q;
}

void save_quantized(const std::filesystem::path& path, const QuantizedModel& model) {
  io::write_file(path, encode_quantized(model));
}

QuantizedModel load_quantized(const std::filesystem::path& path) { return decode_quantized(io::read_file(path)); }

bool is_quantized_file(const std::filesystem::path& path) {
  return nca::read_model_header(path).value("weights_dtype", "f32") == "int8";
}

// --- integer stepping --------------------------------------------------------

QuantizedRunner::QuantizedRunner(const QuantizedModel& model, Edges edges, bool hex, const Tensor* rotation)
    : model_(model), edges_(edges) {
  model_.validate();
  const nca::KernelSet ks = hex ? nca::hex_kernels() : nca::square_kernels();
  for (std::size_t parity = 0; parity < 2; ++parity) {
    const Tensor& t = ks.stencil.for_row(parity);
    taps_[parity].resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) taps_[parity][i] = static_cast<std::int16_t>(std::lround(t[i] * 256.0f));
  }
  w0_packed_ = simd::pack_int16_pairs(model_.w0, nca::kPerception, nca::kHidden);
  w1_packed_ = simd::pack_int16_pairs(model_.w1, nca::kHidden, nca::kChannels);
  b0_ = model_.b0;
  b1_ = model_.b1;
  b1_.resize(kOut1, 0);
  to_hidden_ = Requant::of(static_cast<double>(model_.state_scale) * model_.w0_scale / model_.hidden_scale);
  to_state_ = Requant::of(static_cast<double>(model_.hidden_scale) * model_.w1_scale / model_.state_scale);
  if (rotation) {
    cos_.resize(rotation->size());
    sin_.resize(rotation->size());
    for (std::size_t i = 0; i < rotation->size(); ++i) {
      const float a = (*rotation)[i];
      cos_[i] = a == 0.0f ? 16384 : static_cast<std::int16_t>(std::lround(std::cos(a) * 16384.0f));
      sin_[i] = a == 0.0f ? 0 : static_cast<std::int16_t>(std::lround(std::sin(a) * 16384.0f));
    }
  }
}

void QuantizedRunner::load(const Tensor& state) {
  require_rank(state, 3, "quantized state");
  if (state.dim(2) != nca::kChannels) throw ShapeError("quantized state must have 12 channels");
  h_ = state.dim(0);
  w_ = state.dim(1);
  if (!cos_.empty() && cos_.size() != h_ * w_) throw ShapeError("rotation field does not match the grid");
  const QuantGrid g = state_grid();
  state_.resize(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) state_[i] = static_cast<std::int8_t>(g.code(state[i]) - g.zero_point);
  const std::size_t cells = h_ * w_;
  padded_.assign((h_ + 2) * (w_ + 2) * nca::kChannels, 0);
  perception_.assign(cells * nca::kPerception, 0);
  hidden_.assign(cells * nca::kHidden, 0);
  acc0_.assign(cells * nca::kHidden, 0);
  acc1_.assign(cells * kOut1, 0);
  active_.clear();
  active_.reserve(cells);
}

Tensor QuantizedRunner::state() const {
  Tensor t({h_, w_, nca::kChannels});
  for (std::size_t i = 0; i < state_.size(); ++i) t[i] = static_cast<float>(state_[i]) * model_.state_scale;
  return t;
}

void QuantizedRunner::pad() {
  constexpr std::size_t c = nca::kChannels;
  auto src = [](std::ptrdiff_t i, std::size_t n, Boundary b) {
    const auto sn = static_cast<std::ptrdiff_t>(n);
    if (b == Boundary::torus) return static_cast<std::size_t>(((i % sn) + sn) % sn);
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, sn - 1));
  };
  for (std::size_t py = 0; py < h_ + 2; ++py) {
    const std::size_t sy = src(static_cast<std::ptrdiff_t>(py) - 1, h_, edges_.rows);
    for (std::size_t px = 0; px < w_ + 2; ++px) {
      const std::size_t sx = src(static_cast<std::ptrdiff_t>(px) - 1, w_, edges_.cols);
      std::copy_n(state_.data() + (sy * w_ + sx) * c, c, padded_.data() + (py * (w_ + 2) + px) * c);
    }
  }
}

void QuantizedRunner::step(std::span<const std::uint8_t> mask) {
  constexpr std::size_t c = nca::kChannels, k = nca::kKernels, pc = nca::kPerception, hd = nca::kHidden;
  if (mask.size() != h_ * w_) throw ShapeError("update mask does not match the quantized grid");
  pad();
  active_.clear();
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) active_.push_back(static_cast<std::uint32_t>(i));
  const auto& active = active_;
  const std::size_t pw = w_ + 2;
  for (std::uint32_t cell : active) {
    const std::size_t y = cell / w_, x = cell % w_;
    const std::int16_t* taps = taps_[y % 2].data();
    std::int32_t acc[k * c] = {};
    for (std::size_t dy = 0; dy < 3; ++dy)
      for (std::size_t dx = 0; dx < 3; ++dx) {
        const std::int8_t* v = padded_.data() + ((y + dy) * pw + x + dx) * c;
        const std::int16_t* t = taps + (dy * 3 + dx) * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
          if (t[kk] == 0) continue;
          for (std::size_t ch = 0; ch < c; ++ch) acc[kk * c + ch] += t[kk] * v[ch];
        }
      }
    std::int16_t* p = perception_.data() + cell * pc;
    for (std::size_t i = 0; i < k * c; ++i) p[i] = static_cast<std::int16_t>(shift_round(acc[i], 8));
    if (!cos_.empty() && !(cos_[cell] == 16384 && sin_[cell] == 0)) {
      const std::int32_t cs = cos_[cell], sn = sin_[cell];
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::int32_t gx = p[c + ch], gy = p[2 * c + ch];
        p[c + ch] = static_cast<std::int16_t>(shift_round(std::int64_t{cs} * gx + std::int64_t{sn} * gy, 14));
        p[2 * c + ch] = static_cast<std::int16_t>(shift_round(-std::int64_t{sn} * gx + std::int64_t{cs} * gy, 14));
      }
    }
  }
  const auto& kern = simd::kernels();
  const auto rows = simd::Rows::list(active);
  kern.qaffine(perception_.data(), pc, w0_packed_.data(), b0_.data(), hd, acc0_.data(), rows);
  for (std::uint32_t cell : active) {
    const std::int32_t* a = acc0_.data() + cell * hd;
    std::int16_t* hcode = hidden_.data() + cell * hd;
    for (std::size_t j = 0; j < hd; ++j)
      hcode[j] = static_cast<std::int16_t>(std::clamp(to_hidden_.apply(std::max(a[j], 0)), 0, 255));
  }
  kern.qaffine(hidden_.data(), hd, w1_packed_.data(), b1_.data(), kOut1, acc1_.data(), rows);
  for (std::uint32_t cell : active) {
    const std::int32_t* a = acc1_.data() + cell * kOut1;
    std::int8_t* s = state_.data() + cell * c;
    for (std::size_t ch = 0; ch < c; ++ch)
      s[ch] = static_cast<std::int8_t>(std::clamp(s[ch] + to_state_.apply(a[ch]), -127, 127));
  }
}

}  // namespace texa::runtime
