#include "texa/io.hpp"
#include "texa/runtime.hpp"

namespace texa::runtime {
namespace {

nlohmann::json state_header(std::size_t h, std::size_t w, std::size_t c, const std::string& dtype, float scale,
                            Topology topology) {
  return {{"format", "NCAS"}, {"version", 1},  {"height", h},       {"width", w},
          {"channels", c},    {"dtype", dtype}, {"scale", scale}, {"topology", topology_name(topology)}};
}

}  // namespace

Tensor StateFile::as_tensor() const {
  if (dtype == "f32") return values;
  Tensor t({height, width, channels});
  for (std::size_t i = 0; i < codes.size(); ++i) t[i] = static_cast<float>(codes[i]) * scale;
  return t;
}

void save_state(const std::filesystem::path& path, const Tensor& state, Topology topology) {
  if (state.rank() != 2 && state.rank() != 3) throw ShapeError("state dump needs an [H, W] or [H, W, C] tensor");
  const std::size_t c = state.rank() == 3 ? state.dim(2) : 1;
  io::Bytes blob;
  io::put_f32(blob, state.data());
  io::write_file(path, io::pack_container(kStateMagic, state_header(state.dim(0), state.dim(1), c, "f32", 1.0f, topology),
                                          blob));
}

void save_state_int8(const std::filesystem::path& path, const std::vector<std::int8_t>& codes, std::size_t h,
                     std::size_t w, std::size_t c, float scale, Topology topology) {
  if (codes.size() != h * w * c) throw ShapeError("int8 state size does not match its extents");
  io::Bytes blob;
  io::put_i8(blob, codes);
  io::write_file(path, io::pack_container(kStateMagic, state_header(h, w, c, "int8", scale, topology), blob));
}

StateFile load_state(const std::filesystem::path& path) {
  const io::Bytes bytes = io::read_file(path);
  const io::Container ct = io::unpack_container(bytes, kStateMagic);
  StateFile f;
  try {
    const auto& h = ct.header;
    if (h.at("format") != "NCAS" || h.at("version") != 1) throw io::FormatError("unsupported state format");
    f.height = h.at("height").get<std::size_t>();
    f.width = h.at("width").get<std::size_t>();
    f.channels = h.at("channels").get<std::size_t>();
    f.dtype = h.at("dtype").get<std::string>();
    f.scale = h.value("scale", 1.0f);
    f.topology = h.value("topology", std::string("torus"));
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError(std::string("malformed state header: ") + e.what());
  }
  const std::size_t n = f.height * f.width * f.channels;
  std::size_t used = 0;
  if (f.dtype == "f32") {
    f.values = Tensor(f.channels == 1 ? Shape{f.height, f.width} : Shape{f.height, f.width, f.channels},
                      io::get_f32(ct.payload, 0, n));
    used = n * 4;
  } else if (f.dtype == "int8") {
    f.codes = io::get_i8(ct.payload, 0, n);
    used = n;
  } else {
    throw io::FormatError("unknown state dtype '" + f.dtype + "'");
  }
  if (used != ct.payload.size()) throw io::FormatError("state blob size does not match its header");
  return f;
}

Tensor load_rotation_field(const std::filesystem::path& path) {
  const StateFile f = load_state(path);
  if (f.channels != 1 || f.dtype != "f32") throw io::FormatError("rotation field must be a single-channel f32 raster");
  if (!f.values.all_finite()) throw io::FormatError("rotation field contains non-finite angles");
  return f.values;
}

}  // namespace texa::runtime
