#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "texa/quant.hpp"
#include "texa/simd/kernels.hpp"

using namespace texa;
using namespace texa::simd;

namespace {

std::vector<float> uniform(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<float> d(-1, 1);
  std::vector<float> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

// |a - b| <= tol * (sum of |terms|), the natural bound for differently fused sums
void check_close(const std::vector<float>& a, const std::vector<float>& b, const std::vector<float>& mag) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    INFO("index " << i);
    CHECK(std::fabs(a[i] - b[i]) <= 1e-6f * (mag[i] + 1.0f));
  }
}

}  // namespace

TEST_CASE("scalar kernels are always available") {
  CHECK(isa_available(Isa::scalar));
  CHECK(kernels_for(Isa::scalar).isa == Isa::scalar);
  CHECK(isa_name(Isa::avx2) == "avx2");
}

TEST_CASE("affine: AVX2 matches the scalar reference") {
  if (!isa_available(Isa::avx2)) return;
  const auto& ref = kernels_for(Isa::scalar);
  const auto& vec = kernels_for(Isa::avx2);
  for (const auto& [in_dim, out_dim] : {std::pair<std::size_t, std::size_t>{48, 96}, {96, 12}, {5, 3}, {7, 17},
                                       {1, 1}, {33, 50}, {16, 64}, {3, 41}}) {
    const std::size_t n = 11;
    const auto x = uniform(n * in_dim, in_dim * 7 + out_dim);
    const auto w = uniform(in_dim * out_dim, in_dim + out_dim);
    const auto b = uniform(out_dim, out_dim);
    std::vector<float> mag(n * out_dim, 0.0f);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < out_dim; ++j) {
        float m = std::fabs(b[j]);
        for (std::size_t k = 0; k < in_dim; ++k) m += std::fabs(x[r * in_dim + k] * w[k * out_dim + j]);
        mag[r * out_dim + j] = m;
      }
    for (const bool with_bias : {true, false}) {
      std::vector<float> a(n * out_dim, -7.0f), c(n * out_dim, -7.0f);
      ref.affine(x.data(), in_dim, w.data(), with_bias ? b.data() : nullptr, out_dim, a.data(), Rows::all(n));
      vec.affine(x.data(), in_dim, w.data(), with_bias ? b.data() : nullptr, out_dim, c.data(), Rows::all(n));
      check_close(a, c, mag);
    }
    // explicit row list: untouched rows keep their contents
    const std::vector<std::uint32_t> rows{10, 3, 4, 0, 7};
    std::vector<float> a(n * out_dim, -7.0f), c(n * out_dim, -7.0f);
    ref.affine(x.data(), in_dim, w.data(), b.data(), out_dim, a.data(), Rows::list(rows));
    vec.affine(x.data(), in_dim, w.data(), b.data(), out_dim, c.data(), Rows::list(rows));
    check_close(a, c, mag);
    for (std::size_t j = 0; j < out_dim; ++j) CHECK(c[1 * out_dim + j] == -7.0f);
  }
}

TEST_CASE("affine: a row's value does not depend on its neighbours in the call") {
  for (const Isa isa : {Isa::scalar, Isa::avx2}) {
    if (!isa_available(isa)) continue;
    const auto& k = kernels_for(isa);
    const std::size_t n = 9, in_dim = 48, out_dim = 96;
    const auto x = uniform(n * in_dim, 1), w = uniform(in_dim * out_dim, 2), b = uniform(out_dim, 3);
    std::vector<float> all(n * out_dim), one(n * out_dim);
    k.affine(x.data(), in_dim, w.data(), b.data(), out_dim, all.data(), Rows::all(n));
    for (std::uint32_t r = 0; r < n; ++r) {
      const std::uint32_t idx[1] = {r};
      k.affine(x.data(), in_dim, w.data(), b.data(), out_dim, one.data(), Rows::list(idx));
    }
    CHECK(all == one);
  }
}

TEST_CASE("outer_accumulate: AVX2 matches the scalar reference") {
  if (!isa_available(Isa::avx2)) return;
  const auto& ref = kernels_for(Isa::scalar);
  const auto& vec = kernels_for(Isa::avx2);
  for (const auto& [a_dim, b_dim] : {std::pair<std::size_t, std::size_t>{48, 96}, {96, 12}, {5, 3}, {13, 21}, {1, 9}}) {
    const std::size_t n = 23;
    const auto a = uniform(n * a_dim, a_dim), b = uniform(n * b_dim, b_dim + 1);
    const auto init = uniform(a_dim * b_dim, 99);
    std::vector<float> mag(a_dim * b_dim);
    for (std::size_t p = 0; p < a_dim; ++p)
      for (std::size_t q = 0; q < b_dim; ++q) {
        float m = std::fabs(init[p * b_dim + q]);
        for (std::size_t r = 0; r < n; ++r) m += std::fabs(a[r * a_dim + p] * b[r * b_dim + q]);
        mag[p * b_dim + q] = m;
      }
    std::vector<float> x = init, y = init;
    ref.outer_accumulate(a.data(), a_dim, b.data(), b_dim, x.data(), Rows::all(n));
    vec.outer_accumulate(a.data(), a_dim, b.data(), b_dim, y.data(), Rows::all(n));
    check_close(x, y, mag);
    const std::vector<std::uint32_t> rows{22, 5, 6, 1};
    x = init;
    y = init;
    ref.outer_accumulate(a.data(), a_dim, b.data(), b_dim, x.data(), Rows::list(rows));
    vec.outer_accumulate(a.data(), a_dim, b.data(), b_dim, y.data(), Rows::list(rows));
    check_close(x, y, mag);
  }
}

TEST_CASE("qaffine: AVX2 is bitwise equal to the scalar reference and to a plain loop") {
  std::mt19937_64 g(5);
  for (const auto& [in_dim, out_dim] : {std::pair<std::size_t, std::size_t>{48, 96}, {96, 12}, {2, 1}, {10, 17}}) {
    const std::size_t n = 13, stride = padded_columns(out_dim);
    std::vector<std::int8_t> w(in_dim * out_dim);
    for (auto& v : w) v = static_cast<std::int8_t>(int(g() % 255) - 127);
    std::vector<std::int16_t> x(n * in_dim);
    for (auto& v : x) v = static_cast<std::int16_t>(int(g() % 511) - 255);
    std::vector<std::int32_t> bias(stride, 0);
    for (std::size_t j = 0; j < out_dim; ++j) bias[j] = int(g() % 20001) - 10000;
    const auto packed = pack_int16_pairs(w, in_dim, out_dim);

    std::vector<std::int32_t> expect(n * stride);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < stride; ++j) {
        std::int32_t acc = bias[j];
        if (j < out_dim)
          for (std::size_t k = 0; k < in_dim; ++k) acc += std::int32_t(x[r * in_dim + k]) * w[k * out_dim + j];
        expect[r * stride + j] = acc;
      }
    for (const Isa isa : {Isa::scalar, Isa::avx2}) {
      if (!isa_available(isa)) continue;
      std::vector<std::int32_t> out(n * stride);
      kernels_for(isa).qaffine(x.data(), in_dim, packed.data(), bias.data(), stride, out.data(), Rows::all(n));
      CHECK(out == expect);
    }
  }
}

TEST_CASE("nonzero_rows") {
  const float m[] = {0, 0, 1, 0, 0, 0, 0, -0.0f, 0, 3};
  CHECK(nonzero_rows(m, 5, 2) == std::vector<std::uint32_t>{1, 4});
}

TEST_CASE("fake_quantize: AVX2 is bitwise equal to the scalar reference and to QuantGrid::apply") {
  std::mt19937_64 g(9);
  for (const QuantGrid grid : {QuantGrid::symmetric(3, 8), QuantGrid::from_range(0, 4.25f), QuantGrid::from_range(-0.7f, 2)}) {
    std::vector<float> x;
    std::uniform_real_distribution<float> d(-6, 6);
    for (int i = 0; i < 301; ++i) x.push_back(d(g));
    // exact and near ties, both signs, plus values far outside the grid
    for (int k = -130; k <= 130; ++k) {
      const float tie = (float(k) + 0.5f) * grid.scale;
      x.insert(x.end(), {tie, std::nextafter(tie, 0.0f), std::nextafter(tie, 100.0f), float(k) * grid.scale});
    }
    x.insert(x.end(), {0.0f, -0.0f, 1e30f, -1e30f});
    const float zp = float(grid.zero_point), lo = float(grid.qmin), hi = float(grid.qmax);
    std::vector<float> ref(x.size());
    kernels_for(Isa::scalar).fake_quantize(x.data(), ref.data(), x.size(), grid.scale, zp, lo, hi);
    for (std::size_t i = 0; i < x.size(); ++i) {
      INFO("x = " << x[i]);
      CHECK(ref[i] == grid.apply(x[i]));
    }
    if (!isa_available(Isa::avx2)) continue;
    for (std::size_t n : {x.size(), std::size_t(5), std::size_t(8), std::size_t(0)}) {
      std::vector<float> out(x.size(), -7.0f);
      kernels_for(Isa::avx2).fake_quantize(x.data(), out.data(), n, grid.scale, zp, lo, hi);
      for (std::size_t i = 0; i < x.size(); ++i) {
        INFO("n " << n << " x = " << x[i]);
        if (i < n) {
          CHECK(std::memcmp(&out[i], &ref[i], sizeof(float)) == 0);
        } else {
          CHECK(out[i] == -7.0f);
        }
      }
    }
  }
}
