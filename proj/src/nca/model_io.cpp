#include <cmath>

#include "texa/io.hpp"
#include "texa/nca.hpp"

namespace texa::nca {
namespace {

const char* kTensorNames[] = {"W0", "b0", "W1", "b1"};

nlohmann::json tensor_table(const NcaParams& p) {
  nlohmann::json table = nlohmann::json::array();
  const auto ts = p.tensors();
  for (std::size_t i = 0; i < 4; ++i) table.push_back({{"name", kTensorNames[i]}, {"shape", ts[i]->shape()}});
  return table;
}

void check_header(const nlohmann::json& h) {
  try {
    if (h.at("format").get<std::string>() != "NCAM" || h.at("version").get<int>() != 1) {
      throw io::FormatError("unsupported model format " + h.at("format").dump() + " v" + h.at("version").dump());
    }
    if (h.at("channels").get<std::size_t>() != kChannels) {
      throw io::FormatError("model has " + h.at("channels").dump() + " channels; only 12 are supported");
    }
    if (h.at("hidden").get<std::size_t>() != kHidden || h.at("perception").get<std::size_t>() != kPerception) {
      throw io::FormatError("model layer widths differ from 48 -> 96 -> 12");
    }
    if (h.at("state_band").get<float>() != kStateBand) {
      throw io::FormatError("model state band " + h.at("state_band").dump() + " is not 3");
    }
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError(std::string("malformed model header: ") + e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_model(const Model& model) {
  model.params.validate();
  nlohmann::json h;
  h["format"] = "NCAM";
  h["version"] = 1;
  h["geometry"] = geometry_name(model.geometry);
  h["channels"] = kChannels;
  h["perception"] = kPerception;
  h["hidden"] = kHidden;
  h["state_band"] = kStateBand;
  h["weights_dtype"] = "f32";
  h["tensors"] = tensor_table(model.params);
  if (model.qat) {
    const QatRanges& r = *model.qat;
    h["quantization"] = {{"scheme", "qat"},
                         {"bits", 8},
                         {"weights", {{"W0", r.w0}, {"b0", r.b0}, {"W1", r.w1}, {"b1", r.b1}}},
                         {"state_range", {r.state_lo, r.state_hi}}};
    if (r.hidden > 0) h["quantization"]["hidden_range"] = {0.0f, r.hidden};
  }
  h["provenance"] = model.provenance;
  io::Bytes blob;
  for (const Tensor* t : model.params.tensors()) io::put_f32(blob, t->data());
  return io::pack_container(kModelMagic, h, blob);
}

nlohmann::json read_model_header(const std::filesystem::path& path) {
  const io::Bytes bytes = io::read_file(path);
  return io::unpack_container(bytes, kModelMagic).header;
}

Model decode_model(std::span<const std::uint8_t> bytes) {
  const io::Container c = io::unpack_container(bytes, kModelMagic);
  const nlohmann::json& h = c.header;
  check_header(h);
  if (h.value("weights_dtype", "f32") != "f32") {
    throw io::FormatError("model stores " + h.value("weights_dtype", std::string()) + " weights; expected f32");
  }
  Model m;
  m.params = NcaParams::zeros();
  std::size_t offset = 0;
  for (Tensor* t : m.params.tensors()) {
    const auto values = io::get_f32(c.payload, offset, t->size());
    std::copy(values.begin(), values.end(), t->raw());
    offset += t->size() * sizeof(float);
  }
  if (offset != c.payload.size()) {
    throw io::FormatError("model blob has " + std::to_string(c.payload.size()) + " bytes, expected " +
                          std::to_string(offset));
  }
  try {
    m.geometry = parse_geometry(h.at("geometry").get<std::string>());
    if (h.contains("quantization")) {
      const auto& q = h.at("quantization");
      const auto& w = q.at("weights");
      m.qat = QatRanges{w.at("W0").get<float>(), w.at("b0").get<float>(), w.at("W1").get<float>(),
                        w.at("b1").get<float>(), q.at("state_range").at(0).get<float>(),
                        q.at("state_range").at(1).get<float>()};
      if (q.contains("hidden_range")) {
        m.qat->hidden = q.at("hidden_range").at(1).get<float>();
        if (!std::isfinite(m.qat->hidden) || !(m.qat->hidden > 0)) throw ValueError("hidden range must be positive");
      }
    }
    m.provenance = h.value("provenance", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw io::FormatError(std::string("malformed model header: ") + e.what());
  } catch (const ValueError& e) {
    throw io::FormatError(e.what());
  }
  m.params.validate();
  return m;
}

void save_model(const std::filesystem::path& path, const Model& model) { io::write_file(path, encode_model(model)); }

Model load_model(const std::filesystem::path& path) { return decode_model(io::read_file(path)); }

}  // namespace texa::nca
