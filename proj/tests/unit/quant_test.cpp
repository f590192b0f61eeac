#include <cmath>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "texa/quant.hpp"

using namespace texa;
using texa::testing::random_tensor;

TEST_CASE("fake_quantize leaves grid values unchanged") {
  const QuantGrid g = QuantGrid::from_range(-1.3f, 2.1f);
  Tensor t({256});
  for (int q = 0; q < 256; ++q) t[std::size_t(q)] = g.value(q);
  CHECK(bitwise_equal(ops::fake_quantize(t, g), t));
}

TEST_CASE("fake_quantize at the midpoint of the range") {
  const QuantGrid g = QuantGrid::from_range(-1.0f, 3.0f);
  const float mid = 1.0f;
  CHECK(std::fabs(g.apply(mid) - mid) <= g.scale / 2);
}

TEST_CASE("fake_quantize error bound against a loop oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<float> d(-5, 5);
    float lo = d(gen), hi = d(gen);
    if (lo > hi) std::swap(lo, hi);
    if (hi - lo < 0.1f) hi = lo + 0.1f;
    const QuantGrid g = QuantGrid::from_range(lo, hi);
    const Tensor x = random_tensor({500}, seed, g.lo(), g.hi());
    const Tensor y = ops::fake_quantize(x, g);
    for (std::size_t i = 0; i < x.size(); ++i) {
      // nearest level by exhaustive search
      float best = g.value(g.qmin);
      for (int q = g.qmin; q <= g.qmax; ++q)
        if (std::fabs(g.value(q) - x[i]) < std::fabs(best - x[i])) best = g.value(q);
      CHECK(std::fabs(y[i] - x[i]) <= g.scale / 2 * (1 + 1e-5f));
      CHECK(std::fabs(y[i] - x[i]) <= std::fabs(best - x[i]) + 1e-7f);
    }
  }
}

TEST_CASE("grids represent zero exactly and reject bad ranges") {
  for (auto [lo, hi] : {std::pair{-3.0f, 3.0f}, {-0.1f, 5.0f}, {0.5f, 1.0f}, {-2.0f, -1.0f}}) {
    const QuantGrid g = QuantGrid::from_range(lo, hi);
    CHECK(g.on_grid(0.0f));
    CHECK(g.lo() <= std::min(lo, 0.0f) + g.scale);
    CHECK(g.hi() >= std::max(hi, 0.0f) - g.scale);
  }
  CHECK_THROWS_AS(QuantGrid::from_range(1, 1), ValueError);
  CHECK_THROWS_AS(QuantGrid::from_range(0, NAN), ValueError);
  CHECK_THROWS_AS(QuantGrid::symmetric(0), ValueError);
}

TEST_CASE("symmetric grid has both ends exact") {
  const QuantGrid g = QuantGrid::symmetric(0.37f);
  CHECK(g.apply(0.37f) == doctest::Approx(0.37f).epsilon(1e-6));
  CHECK(g.apply(-0.37f) == -g.apply(0.37f));
  CHECK(g.on_grid(0.0f));
  CHECK(g.qmin == 1);
  CHECK(g.qmax == 255);
}

TEST_CASE("state grid spans exactly the band") {
  const QuantGrid g = state_grid();
  CHECK(g.lo() == -kStateBand);
  CHECK(g.hi() == kStateBand);
  CHECK(g.on_grid(0.0f));
  CHECK(g.apply(3.5f) == kStateBand);
  CHECK(g.apply(-7.0f) == -kStateBand);
}
