#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "texa/tensor.hpp"

namespace texa::io {

using Bytes = std::vector<std::uint8_t>;

/// File could not be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File contents do not follow the expected layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

void put_u32(Bytes& out, std::uint32_t v);
void put_f32(Bytes& out, std::span<const float> values);
void put_i32(Bytes& out, std::span<const std::int32_t> values);
void put_i8(Bytes& out, std::span<const std::int8_t> values);
std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset);
std::vector<float> get_f32(std::span<const std::uint8_t> in, std::size_t offset, std::size_t count);
std::vector<std::int32_t> get_i32(std::span<const std::uint8_t> in, std::size_t offset, std::size_t count);
std::vector<std::int8_t> get_i8(std::span<const std::uint8_t> in, std::size_t offset, std::size_t count);

/// magic(8) | u32 LE header length | UTF-8 JSON header | zero pad to `align` | payload
Bytes pack_container(std::string_view magic, const nlohmann::json& header, std::span<const std::uint8_t> payload,
                     std::size_t align = 1);

struct Container {
  nlohmann::json header;
  std::span<const std::uint8_t> payload;  // view into the caller's buffer
};
Container unpack_container(std::span<const std::uint8_t> bytes, std::string_view magic, std::size_t align = 1);

/// SHA-256 as lowercase hex.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

/// 8-bit RGB raster.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;
};

/// Decodes PNG or JPEG (detected from the signature) to 8-bit RGB.
Image read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);

/// [H, W, 3] tensor in [0, 1].
Tensor image_to_tensor(const Image& image);
/// First three channels of [H, W, C], clamped to [0, 1] and rounded to 8 bits.
Image tensor_to_image(const Tensor& t);
/// Bilinear resampling with half-pixel centers.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

}  // namespace texa::io
