#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "support.hpp"
#include "texa/io.hpp"

using namespace texa;
using namespace texa::io;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "texa_io_test";
  fs::create_directories(dir);
  return dir / name;
}

const fs::path kFixtures = TEXA_FIXTURE_DIR;

}  // namespace

TEST_CASE("little-endian helpers") {
  Bytes b;
  put_u32(b, 0x01020304u);
  CHECK(b == Bytes{4, 3, 2, 1});
  const float f[2] = {1.0f, -2.5f};
  put_f32(b, f);
  CHECK(b.size() == 12);
  CHECK(b[4 + 3] == 0x3f);
  CHECK(get_u32(b, 0) == 0x01020304u);
  CHECK(get_f32(b, 4, 2) == std::vector<float>{1.0f, -2.5f});
  const std::int32_t i[1] = {-2};
  put_i32(b, i);
  CHECK(get_i32(b, 12, 1)[0] == -2);
  CHECK_THROWS_AS(get_f32(b, 10, 2), FormatError);
}

TEST_CASE("container round trip, alignment and damage") {
  const Bytes payload = {9, 8, 7, 6, 5};
  const nlohmann::json header = {{"k", 1}, {"name", "x"}};
  const Bytes packed = pack_container("TESTMAGC", header, payload, 16);
  CHECK(std::string(packed.begin(), packed.begin() + 8) == "TESTMAGC");
  const Container c = unpack_container(packed, "TESTMAGC", 16);
  CHECK(c.header == header);
  CHECK(Bytes(c.payload.begin(), c.payload.end()) == payload);
  CHECK((c.payload.data() - packed.data()) % 16 == 0);

  CHECK_THROWS_AS(unpack_container(packed, "OTHERMAG"), FormatError);
  CHECK_THROWS_AS(unpack_container(std::span(packed).first(10), "TESTMAGC"), FormatError);
  Bytes bad = packed;
  bad[8] = 0xff;
  bad[9] = 0xff;
  CHECK_THROWS_AS(unpack_container(bad, "TESTMAGC"), FormatError);
  bad = packed;
  bad[12] = '[';
  bad[13] = '[';
  CHECK_THROWS_AS(unpack_container(bad, "TESTMAGC"), FormatError);
}

TEST_CASE("sha-256 known answers") {
  CHECK(sha256_hex({}) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const std::string abc = "abc";
  CHECK(sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size())) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  write_file(scratch("abc.bin"), Bytes{'a', 'b', 'c'});
  CHECK(sha256_file(scratch("abc.bin")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK_THROWS_AS(sha256_file(scratch("missing.bin")), IoError);
}

TEST_CASE("png round trip is exact") {
  Image img{7, 5, {}};
  std::mt19937_64 g(1);
  for (std::size_t i = 0; i < 7 * 5 * 3; ++i) img.rgb.push_back(std::uint8_t(g()));
  write_png(scratch("r.png"), img);
  const Image back = read_image(scratch("r.png"));
  CHECK(back.width == 7);
  CHECK(back.height == 5);
  CHECK(back.rgb == img.rgb);
}

TEST_CASE("jpeg fixtures decode to rgb") {
  const Image flat = read_image(kFixtures / "flat_12x8.jpg");
  CHECK(flat.width == 12);
  CHECK(flat.height == 8);
  for (std::size_t i = 0; i < flat.rgb.size(); i += 3) {
    CHECK(std::abs(int(flat.rgb[i]) - 200) <= 3);
    CHECK(std::abs(int(flat.rgb[i + 1]) - 100) <= 3);
    CHECK(std::abs(int(flat.rgb[i + 2]) - 50) <= 3);
  }
  // Grayscale files come back as three equal channels.
  const Image gray = read_image(kFixtures / "gray_ramp.jpg");
  REQUIRE(gray.rgb.size() == 8 * 8 * 3);
  for (std::size_t x = 0; x < 8; ++x) {
    const std::size_t i = (3 * 8 + x) * 3;
    CHECK(gray.rgb[i] == gray.rgb[i + 1]);
    CHECK(gray.rgb[i] == gray.rgb[i + 2]);
    CHECK(std::abs(int(gray.rgb[i]) - int(x * 32)) <= 6);
  }
}

TEST_CASE("unreadable images") {
  CHECK_THROWS_AS(read_image(scratch("none.png")), IoError);
  write_file(scratch("junk.png"), Bytes{1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK_THROWS_AS(read_image(scratch("junk.png")), FormatError);
  Bytes png = read_file(kFixtures / "flat_12x8.jpg");
  png.resize(40);
  write_file(scratch("cut.jpg"), png);
  CHECK_THROWS_AS(read_image(scratch("cut.jpg")), FormatError);
}

TEST_CASE("tensor and image conversion") {
  Image img{2, 1, {0, 128, 255, 1, 2, 3}};
  const Tensor t = image_to_tensor(img);
  CHECK(t.shape() == Shape{1, 2, 3});
  CHECK(t[2] == 1.0f);
  CHECK(tensor_to_image(t).rgb == img.rgb);
  Tensor wide({1, 1, 12});
  wide[0] = -0.5f;
  wide[1] = 1.7f;
  wide[2] = 0.5f;
  CHECK(tensor_to_image(wide).rgb == std::vector<std::uint8_t>{0, 255, 128});
}

TEST_CASE("bilinear resize") {
  const Tensor a = texa::testing::random_tensor({5, 6, 3}, 2, 0.0f, 1.0f);
  CHECK(bitwise_equal(resize_bilinear(a, 5, 6), a));
  Tensor flat({4, 4, 3});
  for (float& v : flat.mutable_data()) v = 0.25f;
  const Tensor stretched = resize_bilinear(flat, 7, 3);
  for (float v : stretched.data()) CHECK(std::fabs(v - 0.25f) < 1e-6);
  // Halving: each output centre sits between two input pixels per axis.
  const Tensor half = resize_bilinear(a, 2, 3);
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 3; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double sy = (y + 0.5) * 2.5 - 0.5;
        const std::size_t y0 = std::size_t(std::floor(sy));
        const double fy = sy - double(y0);
        const std::size_t y1 = std::min<std::size_t>(y0 + 1, 4);
        const double top = (a.at(y0, 2 * x, c) + a.at(y0, 2 * x + 1, c)) / 2;
        const double bot = (a.at(y1, 2 * x, c) + a.at(y1, 2 * x + 1, c)) / 2;
        CHECK(std::fabs(half.at(y, x, c) - ((1 - fy) * top + fy * bot)) < 1e-5);
      }
}
