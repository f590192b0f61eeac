#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "fd_cases.hpp"
#include "support.hpp"
#include "texa/io.hpp"
#include "texa/nca.hpp"

using namespace texa;
using namespace texa::nca;
using texa::testing::random_tensor;

namespace {

NcaParams random_params(std::uint64_t seed, float scale = 0.1f) {
  NcaParams p = NcaParams::zeros();
  std::uint64_t s = seed;
  for (Tensor* t : p.tensors()) {
    *t = random_tensor(t->shape(), ++s, -scale, scale);
  }
  return p;
}

std::vector<std::uint8_t> all_ones(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

float tap(const Tensor& taps, std::size_t dy, std::size_t dx, std::size_t k) {
  return taps[(dy * 3 + dx) * kKernels + k];
}

Tensor roll(const Tensor& t, std::size_t sy, std::size_t sx) {
  Tensor out(t.shape());
  const std::size_t h = t.dim(0), w = t.dim(1), c = t.dim(2);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t k = 0; k < c; ++k) out.at((y + sy) % h, (x + sx) % w, k) = t.at(y, x, k);
  return out;
}

std::vector<std::uint8_t> roll_mask(const std::vector<std::uint8_t>& m, std::size_t h, std::size_t w, std::size_t sy,
                                    std::size_t sx) {
  std::vector<std::uint8_t> out(m.size());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out[((y + sy) % h) * w + (x + sx) % w] = m[y * w + x];
  return out;
}

// relu(p W0 + b0) W1 + b1 for one cell, in f64
std::vector<double> mlp(const std::vector<double>& p, const NcaParams& q) {
  std::vector<double> hidden(kHidden), out(kChannels);
  for (std::size_t j = 0; j < kHidden; ++j) {
    double a = q.b0[j];
    for (std::size_t i = 0; i < kPerception; ++i) a += p[i] * q.w0[i * kHidden + j];
    hidden[j] = std::max(0.0, a);
  }
  for (std::size_t c = 0; c < kChannels; ++c) {
    double a = q.b1[c];
    for (std::size_t j = 0; j < kHidden; ++j) a += hidden[j] * q.w1[j * kChannels + c];
    out[c] = a;
  }
  return out;
}

}  // namespace

TEST_CASE("parameter budget") {
  CHECK(kParamCount == 5868);
  CHECK(NcaParams::zeros().count() == 5868);
  CHECK(NcaParams::init(3).count() == 5868);
  for (std::uint64_t seed = 0; seed < 5; ++seed) CHECK(random_params(seed).count() == 5868);
}

TEST_CASE("initial parameters: zero second layer, bounded first layer, seed-determined") {
  const NcaParams p = NcaParams::init(11);
  CHECK(p.w1 == Tensor({kHidden, kChannels}));
  CHECK(p.b1 == Tensor({kChannels}));
  CHECK(p.b0 == Tensor({kHidden}));
  const float limit = std::sqrt(6.0f / 48.0f);
  for (float v : p.w0.data()) CHECK(std::fabs(v) <= limit);
  CHECK(p == NcaParams::init(11));
  CHECK(!(p == NcaParams::init(12)));
}

TEST_CASE("square stencils are the Sobel pair and the 9-point Laplacian") {
  const Tensor& t = square_kernels().stencil.even;
  const float kx[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  const float ky[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
  const float lap[9] = {1, 2, 1, 2, -12, 2, 1, 2, 1};
  float sum = 0;
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(tap(t, i / 3, i % 3, 0) == (i == 4 ? 1.0f : 0.0f));
    CHECK(tap(t, i / 3, i % 3, 1) == kx[i]);
    CHECK(tap(t, i / 3, i % 3, 2) == ky[i]);
    CHECK(tap(t, i / 3, i % 3, 3) == lap[i]);
    sum += tap(t, i / 3, i % 3, 3);
  }
  CHECK(sum == 0.0f);
  CHECK(square_kernels().stencil.odd.empty());
}

TEST_CASE("hex stencils: derivative taps sum to exactly zero on both row parities") {
  const KernelSet k = hex_kernels();
  for (const Tensor* t : {&k.stencil.even, &k.stencil.odd}) {
    for (std::size_t kk = 1; kk < kKernels; ++kk) {
      float forward = 0, backward = 0;
      for (std::size_t i = 0; i < 9; ++i) forward += tap(*t, i / 3, i % 3, kk);
      for (std::size_t i = 9; i-- > 0;) backward += tap(*t, i / 3, i % 3, kk);
      CHECK(forward == 0.0f);
      CHECK(backward == 0.0f);
    }
    // six neighbours, one corner of the window unused
    int used = 0;
    for (std::size_t i = 0; i < 9; ++i)
      if (i != 4 && tap(*t, i / 3, i % 3, 3) != 0) ++used;
    CHECK(used == 6);
  }
}

TEST_CASE("hex stencils: constant field gives zero derivatives") {
  const Tensor s = Tensor::full({6, 5, kChannels}, 0.5f);
  for (auto e : {Boundary::torus, Boundary::clamp}) {
    StepOptions opt;
    opt.edges = Edges::uniform(e);
    const Tensor p = perceive(s, hex_kernels(), opt);
    for (std::size_t cell = 0; cell < 30; ++cell)
      for (std::size_t c = kChannels; c < kPerception; ++c) CHECK(p[cell * kPerception + c] == 0.0f);
  }
}

TEST_CASE("hex stencils: ramp and bowl responses match the square lattice") {
  // Physical position of raster cell (y, x): odd rows shifted right by half a cell.
  const double h = std::sqrt(3.0) / 2;
  const std::size_t n = 8;
  Tensor ramp_hex({n, n, kChannels}), ramp_sq({n, n, kChannels}), bowl_hex({n, n, kChannels}),
      bowl_sq({n, n, kChannels});
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double px = double(x) + (y % 2 ? 0.5 : 0.0), py = double(y) * h;
      const double cx = 4.0, cy = 4.0 * h;
      ramp_hex.at(y, x, 0) = float(px);
      ramp_sq.at(y, x, 0) = float(x);
      bowl_hex.at(y, x, 0) = float((px - cx) * (px - cx) + (py - cy) * (py - cy));
      bowl_sq.at(y, x, 0) = float((double(x) - 4) * (double(x) - 4) + (double(y) - 4) * (double(y) - 4));
    }
  StepOptions opt;
  opt.edges = Edges::uniform(Boundary::clamp);
  const Tensor ph = perceive(ramp_hex, hex_kernels(), opt), ps = perceive(ramp_sq, square_kernels(), opt);
  const Tensor bh = perceive(bowl_hex, hex_kernels(), opt), bs = perceive(bowl_sq, square_kernels(), opt);
  const std::size_t gx = kChannels, lap = 3 * kChannels;
  for (std::size_t y = 1; y + 1 < n; ++y)
    for (std::size_t x = 1; x + 1 < n; ++x) {
      const std::size_t cell = y * n + x;
      CHECK(ps[cell * kPerception + gx] == 8.0f);
      CHECK(ph[cell * kPerception + gx] == doctest::Approx(8.0).epsilon(1e-6));
      CHECK(ph[cell * kPerception + 2 * kChannels] == doctest::Approx(0.0).epsilon(1e-6));
    }
  const std::size_t centre = 4 * n + 4;
  CHECK(bs[centre * kPerception + lap] == 16.0f);
  CHECK(bh[centre * kPerception + lap] == doctest::Approx(16.0).epsilon(1e-5));
}

TEST_CASE("check_geometry rejects an odd hex torus") {
  CHECK_THROWS_AS(check_geometry(5, 4, Geometry::hex, Edges{}), ShapeError);
  CHECK_NOTHROW(check_geometry(5, 4, Geometry::hex, Edges{Boundary::clamp, Boundary::torus}));
  CHECK_NOTHROW(check_geometry(5, 4, Geometry::square, Edges{}));
  CHECK_THROWS_AS(check_geometry(0, 4, Geometry::square, Edges{}), ShapeError);
}

TEST_CASE("perceive: constant state") {
  const Tensor s = Tensor::full({4, 5, kChannels}, 0.375f);
  const Tensor p = perceive(s, square_kernels());
  for (std::size_t cell = 0; cell < 20; ++cell)
    for (std::size_t c = 0; c < kPerception; ++c) CHECK(p[cell * kPerception + c] == (c < kChannels ? 0.375f : 0.0f));
}

TEST_CASE("perceive: rotation") {
  const Tensor s = random_tensor({4, 4, kChannels}, 5);
  const Tensor plain = perceive(s, square_kernels());
  const std::size_t C = kChannels;

  Tensor quarter = Tensor::full({4, 4}, float(M_PI / 2));
  StepOptions opt;
  opt.rotation = &quarter;
  const Tensor q = perceive(s, square_kernels(), opt);
  for (std::size_t cell = 0; cell < 16; ++cell)
    for (std::size_t c = 0; c < C; ++c) {
      const float gx = plain[cell * 48 + C + c], gy = plain[cell * 48 + 2 * C + c];
      CHECK(q[cell * 48 + C + c] == doctest::Approx(gy).epsilon(1e-6));
      CHECK(q[cell * 48 + 2 * C + c] == doctest::Approx(-gx).epsilon(1e-6));
    }

  Tensor eighth = Tensor::full({4, 4}, float(M_PI / 4));
  opt.rotation = &eighth;
  const Tensor r = perceive(s, square_kernels(), opt);
  const double co = std::cos(double(float(M_PI / 4))), si = std::sin(double(float(M_PI / 4)));
  for (std::size_t cell = 0; cell < 16; ++cell)
    for (std::size_t c = 0; c < C; ++c) {
      const double gx = plain[cell * 48 + C + c], gy = plain[cell * 48 + 2 * C + c];
      CHECK(std::fabs(r[cell * 48 + C + c] - (co * gx + si * gy)) < 1e-6 * (1 + std::fabs(gx) + std::fabs(gy)));
      CHECK(std::fabs(r[cell * 48 + 2 * C + c] - (-si * gx + co * gy)) < 1e-6 * (1 + std::fabs(gx) + std::fabs(gy)));
      CHECK(r[cell * 48 + c] == plain[cell * 48 + c]);
      CHECK(r[cell * 48 + 3 * C + c] == plain[cell * 48 + 3 * C + c]);
    }

  Tensor wrong({3, 4});
  opt.rotation = &wrong;
  CHECK_THROWS_AS(perceive(s, square_kernels(), opt), ShapeError);
}

TEST_CASE("update rule examples") {
  const Tensor p = random_tensor({3, 3, kPerception}, 6);
  CHECK(update_rule(p, NcaParams::zeros()) == Tensor({3, 3, kChannels}));
  CHECK(update_rule(p, NcaParams::init(4)) == Tensor({3, 3, kChannels}));

  const NcaParams q = random_params(7, 0.3f);
  const Tensor one = random_tensor({1, 1, kPerception}, 8);
  const Tensor d = update_rule(one, q);
  const auto expect = mlp(std::vector<double>(one.data().begin(), one.data().end()), q);
  for (std::size_t c = 0; c < kChannels; ++c) CHECK(std::fabs(d[c] - expect[c]) < 1e-5);

  CHECK_THROWS_AS(update_rule(random_tensor({2, 2, 47}, 9), q), ShapeError);
}

TEST_CASE("step examples") {
  const Tensor s = noise_state(5, 6, 1);
  const NcaParams q = random_params(2);
  CHECK(bitwise_equal(step(s, q, square_kernels(), std::vector<std::uint8_t>(30, 0)), s));
  CHECK(bitwise_equal(step(s, NcaParams::zeros(), square_kernels(), all_ones(30)), s));

  // 1x1 torus: every neighbour is the cell itself, so only the identity block is non-zero
  const NcaParams big = random_params(3, 0.4f);
  const Tensor cell = random_tensor({1, 1, kChannels}, 4, -1, 1);
  const Tensor next = step(cell, big, square_kernels(), all_ones(1));
  std::vector<double> p(kPerception, 0.0);
  for (std::size_t c = 0; c < kChannels; ++c) p[c] = cell[c];
  const auto d = mlp(p, big);
  for (std::size_t c = 0; c < kChannels; ++c) {
    const double want = std::clamp(double(cell[c]) + d[c], -3.0, 3.0);
    CHECK(std::fabs(next[c] - want) < 1e-5);
  }
}

TEST_CASE("step keeps the state inside the band") {
  const Tensor s = noise_state(6, 6, 5);
  const NcaParams wild = random_params(6, 5.0f);
  Tensor x = s;
  for (std::size_t t = 0; t < 5; ++t) {
    x = step(x, wild, square_kernels(), all_ones(36), {}, t);
    for (float v : x.data()) CHECK(std::fabs(v) <= kStateBand);
  }
}

TEST_CASE("step reports divergence with the step index") {
  NcaParams q = random_params(7);
  q.b1[3] = NAN;
  try {
    step(noise_state(3, 3, 1), q, square_kernels(), all_ones(9), {}, 17);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.step() == 17);
  }
}

TEST_CASE("step with quantized state lands on the state grid") {
  StepOptions opt;
  opt.quantize_state = true;
  const Tensor x = step(noise_state(4, 4, 2), random_params(8), square_kernels(), all_ones(16), opt);
  for (float v : x.data()) CHECK(state_grid().on_grid(v));
}

TEST_CASE("quantized step reads its input through the state grid") {
  StepOptions opt;
  opt.quantize_state = true;
  const Tensor s = noise_state(4, 4, 3);
  const std::vector<std::uint8_t> none(16, 0);
  CHECK(bitwise_equal(step(s, random_params(9), square_kernels(), none, opt), ops::fake_quantize(s, state_grid())));
  const Tensor q = ops::fake_quantize(s, state_grid());
  CHECK(bitwise_equal(step(s, random_params(9), square_kernels(), all_ones(16), opt),
                      step(q, random_params(9), square_kernels(), all_ones(16), opt)));
}

TEST_CASE("hidden grid: rounding and peak observation") {
  const QuantGrid g = hidden_grid(2.0f);
  CHECK(g.value(0) == 0.0f);
  CHECK(g.value(255) == 2.0f);
  CHECK(g.apply(5.0f) == 2.0f);

  const Tensor p = random_tensor({3, 3, kPerception}, 70);
  const NcaParams q = random_params(71, 0.3f);
  float peak = 0;
  StepOptions observe;
  observe.hidden_peak = &peak;
  const Tensor plain = update_rule(p, q, nullptr, observe);
  CHECK(bitwise_equal(plain, update_rule(p, q)));
  const Tensor hidden = ops::relu(ops::matmul_pointwise(p, q.w0, q.b0));
  float want = 0;
  for (float v : hidden.data()) want = std::max(want, v);
  CHECK(peak == want);

  StepOptions rounded;
  rounded.hidden_range = 0.5f * want;
  const Tensor expect = ops::matmul_pointwise(ops::fake_quantize(hidden, hidden_grid(0.5f * want)), q.w1, q.b1);
  CHECK(bitwise_equal(update_rule(p, q, nullptr, rounded), expect));
  Tape tape;
  const Var v = nca::ad::update_rule(tape.constant(p), nca::ad::ParamVars::constants(tape, q), nullptr, rounded);
  CHECK(bitwise_equal(v.value(), expect));
}

TEST_CASE("rollout examples") {
  const Tensor s = noise_state(3, 3, 9);
  const NcaParams q = random_params(10);
  const UpdateMask mask{77};
  const KernelSet k = square_kernels();
  CHECK(bitwise_equal(rollout(s, q, k, 1, mask), step(s, q, k, mask.bits(0, 3, 3))));
  CHECK(bitwise_equal(rollout(s, NcaParams::zeros(), k, 9, mask), s));
  const Tensor two = step(step(s, q, k, mask.bits(0, 3, 3), {}, 0), q, k, mask.bits(1, 3, 3), {}, 1);
  CHECK(bitwise_equal(rollout(s, q, k, 2, mask), two));
  CHECK(bitwise_equal(rollout(rollout(s, q, k, 3, mask), q, k, 4, mask, {}, 3), rollout(s, q, k, 7, mask)));
}

TEST_CASE("property: translation equivariance on the torus") {
  const NcaParams q = random_params(11, 0.2f);
  for (const Geometry g : {Geometry::square, Geometry::hex}) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      std::mt19937_64 gen(seed);
      const std::size_t h = 2 * (2 + gen() % 4), w = 3 + gen() % 6;
      // hex stencils depend on row parity, so only even row shifts are symmetries there
      const std::size_t sy = (g == Geometry::hex ? 2 * (gen() % (h / 2)) : gen() % h), sx = gen() % w;
      const Tensor s = noise_state(h, w, seed);
      const auto m = UpdateMask{seed}.bits(0, h, w);
      const KernelSet k = kernels_for(g);
      const Tensor a = step(roll(s, sy, sx), q, k, roll_mask(m, h, w, sy, sx));
      const Tensor b = roll(step(s, q, k, m), sy, sx);
      CHECK(bitwise_equal(a, b));
    }
  }
}

TEST_CASE("property: mask rate") {
  double total = 0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const UpdateMask m{seed};
    for (std::uint64_t t = 0; t < 100; ++t) {
      for (auto b : m.bits(t, 64, 64)) total += b;
      n += 64 * 64;
    }
  }
  CHECK(std::fabs(total / double(n) - 0.5) < 0.01);
  const UpdateMask m{5};
  CHECK(m.bits(3, 8, 8) == m.bits(3, 8, 8));
  CHECK(m.bits(3, 8, 8) != m.bits(4, 8, 8));
  // a window of the grid sees the same bits as the full grid
  const auto full = m.bits(9, 10, 12);
  const auto win = m.bits(9, 2, 3, 4, 5, 12);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 5; ++x) CHECK(win[y * 5 + x] == full[(y + 2) * 12 + x + 3]);
}

TEST_CASE("property: zero rotation field is bitwise the same as none") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Tensor s = noise_state(6, 7, seed);
    const NcaParams q = random_params(seed + 20);
    const auto m = UpdateMask{seed}.bits(0, 6, 7);
    Tensor zero({6, 7});
    StepOptions opt;
    opt.rotation = &zero;
    CHECK(bitwise_equal(step(s, q, square_kernels(), m, opt), step(s, q, square_kernels(), m)));
  }
}

TEST_CASE("recorded step and rollout equal the forward path bitwise") {
  const Tensor s = noise_state(6, 6, 30);
  const NcaParams q = random_params(31);
  for (const Geometry g : {Geometry::square, Geometry::hex}) {
    for (const bool quant : {false, true}) {
      StepOptions opt;
      opt.quantize_state = quant;
      Tape tape;
      const auto pv = nca::ad::ParamVars::constants(tape, q);
      const UpdateMask mask{4};
      const Var out = nca::ad::rollout(tape.constant(s), pv, kernels_for(g), 5, mask, opt);
      CHECK(bitwise_equal(out.value(), rollout(s, q, kernels_for(g), 5, mask, opt)));
    }
  }
}

TEST_CASE("rollout gradients match finite differences") {
  for (const auto& c : {texa::testing::rollout_param_case(40), texa::testing::rollout_state_case(43)}) {
    const auto r = c.run();
    INFO(c.name << ": " << r.passed << "/" << r.checked << " worst " << r.worst);
    CHECK(r.pass_rate() >= 0.95);
  }
}

TEST_CASE("f64 oracle agrees with the f32 rollout") {
  const Tensor s = noise_state(5, 6, 46);
  const NcaParams q = random_params(47, 0.2f);
  const Tensor f = rollout(s, q, square_kernels(), 3, UpdateMask{0, 1.0f});
  const auto d = texa::testing::rollout_f64(s, {q.w0, q.b0, q.w1, q.b1}, 3);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::fabs(f[i] - d[i]) < 1e-4);
}

TEST_CASE("NCAM round trip") {
  Model m;
  m.params = random_params(50);
  m.geometry = Geometry::hex;
  m.qat = QatRanges::of(m.params);
  m.provenance = {{"tool", "test"}, {"steps", 3}};
  const auto bytes = encode_model(m);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "NCAMODEL");
  const Model back = decode_model(bytes);
  CHECK(back.params == m.params);
  CHECK(back.geometry == Geometry::hex);
  REQUIRE(back.qat);
  CHECK(back.qat->w1 == m.qat->w1);
  CHECK(back.qat->hidden == 0.0f);
  CHECK(back.provenance == m.provenance);
  CHECK(encode_model(back) == bytes);

  const auto dir = std::filesystem::temp_directory_path() / "texa_nca_test";
  std::filesystem::create_directories(dir);
  save_model(dir / "m.ncam", m);
  CHECK(load_model(dir / "m.ncam").params == m.params);
  const auto header = read_model_header(dir / "m.ncam");
  CHECK(header["format"] == "NCAM");
  CHECK(header["version"] == 1);
  CHECK(header["channels"] == 12);
  CHECK(header["state_band"] == 3.0);
  CHECK(header["quantization"]["bits"] == 8);

  // the blob is W0, b0, W1, b1 as little-endian f32 at the end of the file
  const std::size_t blob = bytes.size() - 5868 * 4;
  CHECK(io::get_f32(bytes, blob, 1)[0] == m.params.w0[0]);
  CHECK(io::get_f32(bytes, bytes.size() - 4, 1)[0] == m.params.b1[11]);

  m.qat->hidden = 4.25f;
  const Model with_hidden = decode_model(encode_model(m));
  CHECK(with_hidden.qat->hidden == 4.25f);
  nlohmann::json h = io::unpack_container(encode_model(m), kModelMagic).header;
  CHECK(h["quantization"]["hidden_range"] == nlohmann::json::array({0.0, 4.25}));
  h["quantization"]["hidden_range"] = {0, -1};
  io::Bytes weights;
  for (const Tensor* t : m.params.tensors()) io::put_f32(weights, t->data());
  CHECK_THROWS_AS(decode_model(io::pack_container(kModelMagic, h, weights)), io::FormatError);
}

TEST_CASE("NCAM rejects damaged files") {
  Model m;
  m.params = NcaParams::init(1);
  auto bytes = encode_model(m);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_model(bad_magic), io::FormatError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 4);
  CHECK_THROWS_AS(decode_model(truncated), io::FormatError);
  CHECK_THROWS_AS(load_model("/nonexistent/texa.ncam"), io::IoError);
  m.params.w0[0] = NAN;
  CHECK_THROWS(encode_model(m));
}
