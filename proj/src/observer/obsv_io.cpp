#include "texa/io.hpp"
#include "texa/observer.hpp"

namespace texa::observer {
namespace {

constexpr std::size_t kAlign = 16;

nlohmann::json put_tensor(io::Bytes& blob, const Tensor& t) {
  while (blob.size() % kAlign != 0) blob.push_back(0);
  nlohmann::json ref = {{"offset", blob.size()}, {"shape", t.shape()}};
  io::put_f32(blob, t.data());
  return ref;
}

Tensor get_tensor(std::span<const std::uint8_t> blob, const nlohmann::json& ref, const std::string& what) {
  const Shape shape = ref.at("shape").get<Shape>();
  const std::size_t offset = ref.at("offset").get<std::size_t>();
  if (offset % kAlign != 0) throw io::FormatError(what + ": offset " + std::to_string(offset) + " is not 16-byte aligned");
  const auto values = io::get_f32(blob, offset, element_count(shape));
  return Tensor(shape, values);
}

}  // namespace

std::vector<std::uint8_t> encode_graph(const Graph& graph) {
  io::Bytes blob;
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : graph.layers()) {
    nlohmann::json j = {{"name", l.name}, {"op", op_name(l.op)}, {"inputs", l.inputs}};
    if (l.op == Op::conv2d) {
      j["weight"] = put_tensor(blob, l.weight);
      j["bias"] = put_tensor(blob, l.bias);
      j["stride"] = l.stride;
      j["padding"] = "same";
    }
    if (l.op == Op::normalize) {
      j["mean"] = l.mean;
      j["std"] = l.std;
    }
    layers.push_back(std::move(j));
  }
  while (blob.size() % kAlign != 0) blob.push_back(0);
  nlohmann::json h = {{"format", "OBSV"},
                      {"version", 1},
                      {"layout", "HWCK"},
                      {"dtype", "f32"},
                      {"endian", "little"},
                      {"gram_normalization", "hw"},
                      {"input", {{"name", kInput}, {"channels", 3}, {"range", {0.0, 1.0}}}},
                      {"min_input", graph.min_input()},
                      {"layers", layers},
                      {"taps", graph.taps()},
                      {"tap_weights", graph.tap_weights()},
                      {"blob_bytes", blob.size()}};
  return io::pack_container(kObserverMagic, h, blob, kAlign);
}

Graph decode_graph(std::span<const std::uint8_t> bytes) {
  const io::Container c = io::unpack_container(bytes, kObserverMagic, kAlign);
  const nlohmann::json& h = c.header;
  try {
    if (h.at("format") != "OBSV" || h.at("version") != 1) throw io::FormatError("unsupported observer format");
    if (h.at("layout") != "HWCK") throw io::FormatError("unsupported conv weight layout " + h.at("layout").dump());
    if (h.value("gram_normalization", "hw") != "hw") {
      throw io::FormatError("unsupported gram normalization " + h.at("gram_normalization").dump());
    }
    std::vector<Layer> layers;
    for (const auto& j : h.at("layers")) {
      Layer l;
      l.name = j.at("name").get<std::string>();
      l.op = parse_op(j.at("op").get<std::string>());
      l.inputs = j.at("inputs").get<std::vector<std::string>>();
      if (l.op == Op::conv2d) {
        if (j.value("padding", "same") != "same") throw io::FormatError(l.name + ": only same padding is supported");
        l.weight = get_tensor(c.payload, j.at("weight"), l.name + ".weight");
        l.bias = get_tensor(c.payload, j.at("bias"), l.name + ".bias");
        l.stride = j.value("stride", std::size_t{1});
      }
      if (l.op == Op::normalize) {
        l.mean = j.at("mean").get<std::vector<float>>();
        l.std = j.at("std").get<std::vector<float>>();
      }
      layers.push_back(std::move(l));
    }
    std::vector<float> weights = h.value("tap_weights", std::vector<float>{});
    Graph g(std::move(layers), h.at("taps").get<std::vector<std::string>>(), std::move(weights));
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError(std::string("malformed observer manifest: ") + e.what());
  } catch (const ValueError& e) {
    throw io::FormatError(std::string("invalid observer graph: ") + e.what());
  } catch (const ShapeError& e) {
    throw io::FormatError(std::string("invalid observer graph: ") + e.what());
  }
}

void save_graph(const std::filesystem::path& path, const Graph& graph) { io::write_file(path, encode_graph(graph)); }

Graph load_graph(const std::filesystem::path& path) { return decode_graph(io::read_file(path)); }

}  // namespace texa::observer
