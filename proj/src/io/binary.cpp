#include <bit>
#include <cstring>
#include <fstream>

#include "texa/io.hpp"

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace texa::io {

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error while reading '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error while writing '" + path.string() + "'");
}

namespace {
template <class T>
void put_raw(Bytes& out, std::span<const T> values) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
  out.insert(out.end(), p, p + values.size_bytes());
}

template <class T>
std::vector<T> get_raw(std::span<const std::uint8_t> in, std::size_t offset, std::size_t count) {
  if (offset > in.size() || count > (in.size() - offset) / sizeof(T)) {
    throw FormatError("truncated data: need " + std::to_string(count * sizeof(T)) + " bytes at offset " +
                      std::to_string(offset) + ", have " + std::to_string(in.size()));
  }
  std::vector<T> out(count);
  std::memcpy(out.data(), in.data() + offset, count * sizeof(T));
  return out;
}
}  // namespace

void put_u32(Bytes& out, std::uint32_t v) { put_raw<std::uint32_t>(out, std::span(&v, 1)); }
void put_f32(Bytes& out, std::span<const float> values) { put_raw(out, values); }
void put_i32(Bytes& out, std::span<const std::int32_t> values) { put_raw(out, values); }
void put_i8(Bytes& out, std::span<const std::int8_t> values) { put_raw(out, values); }

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
  return get_raw<std::uint32_t>(in, offset, 1)[0];
}
std::vector<float> get_f32(std::span<const std::uint8_t> in, std::size_t offset, std::size_t count) {
  return get_raw<float>(in, offset, count);
}
std::vector<std::int32_t> get_i32(std::span<const std::uint8_t> in, std::size_t offset, std::size_t count) {
  return get_raw<std::int32_t>(in, offset, count);
}
std::vector<std::int8_t> get_i8(std::span<const std::uint8_t> in, std::size_t offset, std::size_t count) {
  return get_raw<std::int8_t>(in, offset, count);
}

Bytes pack_container(std::string_view magic, const nlohmann::json& header, std::span<const std::uint8_t> payload,
                     std::size_t align) {
  if (magic.size() != 8) throw std::invalid_argument("container magic must be 8 bytes");
  const std::string text = header.dump();
  Bytes out(magic.begin(), magic.end());
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  while (out.size() % align != 0) out.push_back(0);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Container unpack_container(std::span<const std::uint8_t> bytes, std::string_view magic, std::size_t align) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), magic.data(), 8) != 0) {
    throw FormatError("bad magic: expected '" + std::string(magic) + "'");
  }
  const std::uint32_t len = get_u32(bytes, 8);
  if (len > bytes.size() - 12) throw FormatError("header length " + std::to_string(len) + " exceeds file size");
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + len);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed JSON header: ") + e.what());
  }
  std::size_t start = 12 + len;
  start = (start + align - 1) / align * align;
  if (start > bytes.size()) throw FormatError("payload missing");
  c.payload = bytes.subspan(start);
  return c;
}

}  // namespace texa::io
