#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "texa/rng.hpp"

using namespace texa::rng;

TEST_CASE("Philox4x32-10 known-answer vectors") {
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == Counter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        Counter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        Counter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("unit_float stays in [0, 1)") {
  CHECK(unit_float(0) == 0.0f);
  CHECK(unit_float(0xffffffffu) < 1.0f);
}

TEST_CASE("derive_seed separates tags and indices") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t tag = 0; tag < 8; ++tag)
    for (std::uint64_t i = 0; i < 8; ++i) seen.insert(derive_seed(42, tag, i));
  CHECK(seen.size() == 64);
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
}

TEST_CASE("counter draws are random access") {
  const CounterRng rng(7);
  CHECK(rng.noise(123, 5) == CounterRng(7).noise(123, 5));
  CHECK(rng.mask_bit(9, 33, 1.0f));
  CHECK(!rng.mask_bit(9, 33, 0.0f));
}

TEST_CASE("Stream::below and between stay in range and cover it") {
  Stream s(3);
  std::map<std::int64_t, int> hist;
  for (int i = 0; i < 20000; ++i) {
    const auto v = s.between(-2, 3);
    REQUIRE(v >= -2);
    REQUIRE(v <= 3);
    ++hist[v];
  }
  CHECK(hist.size() == 6);
  for (const auto& [v, n] : hist) CHECK(std::abs(n - 20000 / 6) < 300);
  for (std::uint32_t n : {1u, 2u, 3u, 1000u, 0x80000001u}) CHECK(s.below(n) < n);
  CHECK(s.between(5, 5) == 5);
}
