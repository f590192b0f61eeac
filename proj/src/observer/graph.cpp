#include <algorithm>
#include <cmath>
#include <map>

#include "texa/observer.hpp"

namespace texa::observer {

std::string op_name(Op op) {
  switch (op) {
    case Op::conv2d: return "conv2d";
    case Op::relu: return "relu";
    case Op::maxpool2: return "maxpool2";
    case Op::avgpool2: return "avgpool2";
    case Op::concat: return "concat";
    case Op::normalize: return "normalize";
  }
  return "?";
}

Op parse_op(const std::string& name) {
  for (Op op : {Op::conv2d, Op::relu, Op::maxpool2, Op::avgpool2, Op::concat, Op::normalize})
    if (op_name(op) == name) return op;
  throw ValueError("unknown observer layer op '" + name + "'");
}

namespace {

struct NodeInfo {
  std::size_t channels;
  std::size_t reduction;  // cumulative spatial downsampling
};

std::vector<std::size_t> topo_order(const std::vector<Layer>& layers, const std::map<std::string, std::size_t>& index) {
  const std::size_t n = layers.size();
  std::vector<std::size_t> pending(n, 0);
  std::vector<std::vector<std::size_t>> consumers(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& in : layers[i].inputs) {
      if (in == kInput) continue;
      const auto it = index.find(in);
      if (it == index.end()) throw ValueError("layer '" + layers[i].name + "' reads unknown node '" + in + "'");
      ++pending[i];
      consumers[it->second].push_back(i);
    }
  }
  std::vector<std::size_t> order;
  std::vector<bool> done(n, false);
  // Stable Kahn: always emit the earliest-declared ready layer.
  while (order.size() < n) {
    std::size_t next = n;
    for (std::size_t i = 0; i < n; ++i)
      if (!done[i] && pending[i] == 0) {
        next = i;
        break;
      }
    if (next == n) {
      std::string stuck;
      for (std::size_t i = 0; i < n; ++i)
        if (!done[i]) stuck += (stuck.empty() ? "" : ", ") + layers[i].name;
      throw ValueError("observer graph has a cycle among: " + stuck);
    }
    done[next] = true;
    order.push_back(next);
    for (std::size_t c : consumers[next]) --pending[c];
  }
  return order;
}

}  // namespace

Graph::Graph(std::vector<Layer> layers, std::vector<std::string> taps, std::vector<float> tap_weights)
    : taps_(std::move(taps)), tap_weights_(std::move(tap_weights)) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name.empty() || layers[i].name == kInput) {
      throw ValueError("invalid observer layer name '" + layers[i].name + "'");
    }
    if (!index.emplace(layers[i].name, i).second) throw ValueError("duplicate observer layer '" + layers[i].name + "'");
  }
  const auto order = topo_order(layers, index);
  layers_.reserve(layers.size());
  for (std::size_t i : order) layers_.push_back(std::move(layers[i]));
  index.clear();
  for (std::size_t i = 0; i < layers_.size(); ++i) index[layers_[i].name] = i;

  std::vector<NodeInfo> info(layers_.size());
  wiring_.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    const std::string where = "observer layer '" + l.name + "' (" + op_name(l.op) + ")";
    if (l.inputs.empty() || (l.op != Op::concat && l.inputs.size() != 1)) {
      throw ValueError(where + " has " + std::to_string(l.inputs.size()) + " inputs");
    }
    std::vector<NodeInfo> in;
    for (const auto& name : l.inputs) {
      const std::size_t src = name == kInput ? 0 : index.at(name) + 1;
      wiring_[i].push_back(src);
      in.push_back(src == 0 ? NodeInfo{3, 1} : info[src - 1]);
    }
    NodeInfo out = in[0];
    switch (l.op) {
      case Op::conv2d: {
        if (l.weight.rank() != 4 || l.weight.dim(2) != out.channels) {
          throw ValueError(where + ": weight shape " + to_string(l.weight.shape()) + " does not take " +
                           std::to_string(out.channels) + " input channels");
        }
        if (l.bias.rank() != 1 || l.bias.dim(0) != l.weight.dim(3)) {
          throw ValueError(where + ": bias shape " + to_string(l.bias.shape()) + " does not match weight");
        }
        if (l.stride == 0) throw ValueError(where + ": stride must be positive");
        if (!l.weight.all_finite() || !l.bias.all_finite()) throw ValueError(where + ": non-finite weights");
        out = {l.weight.dim(3), out.reduction * l.stride};
        break;
      }
      case Op::relu: break;
      case Op::maxpool2:
      case Op::avgpool2: out.reduction *= 2; break;
      case Op::concat: {
        out.channels = 0;
        for (const auto& p : in) {
          if (p.reduction != in[0].reduction) throw ValueError(where + ": inputs have different resolutions");
          out.channels += p.channels;
        }
        break;
      }
      case Op::normalize: {
        if (l.mean.size() != out.channels || l.std.size() != out.channels) {
          throw ValueError(where + ": statistics do not match " + std::to_string(out.channels) + " channels");
        }
        for (std::size_t c = 0; c < out.channels; ++c)
          if (!std::isfinite(l.mean[c]) || !std::isfinite(l.std[c]) || !(l.std[c] > 0.0f)) {
            throw ValueError(where + ": invalid statistics");
          }
        break;
      }
    }
    info[i] = out;
  }

  if (taps_.empty()) throw ValueError("observer graph declares no taps");
  if (tap_weights_.empty()) tap_weights_.assign(taps_.size(), 1.0f);
  if (tap_weights_.size() != taps_.size()) throw ValueError("tap weight count differs from tap count");
  last_use_.assign(layers_.size(), 0);
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (std::size_t src : wiring_[i])
      if (src > 0) last_use_[src - 1] = i;
  min_input_ = 1;
  for (std::size_t t = 0; t < taps_.size(); ++t) {
    const auto it = index.find(taps_[t]);
    if (it == index.end()) throw ValueError("tap '" + taps_[t] + "' is not a node of the observer graph");
    if (!std::isfinite(tap_weights_[t])) throw ValueError("tap weight for '" + taps_[t] + "' is not finite");
    tap_nodes_.push_back(it->second);
    tap_channels_.push_back(info[it->second].channels);
    last_use_[it->second] = layers_.size();
    min_input_ = std::max(min_input_, info[it->second].reduction);
  }
}

std::size_t Graph::tap_index(const std::string& name) const {
  const auto it = std::find(taps_.begin(), taps_.end(), name);
  if (it == taps_.end()) throw ValueError("observer has no tap '" + name + "'");
  return static_cast<std::size_t>(it - taps_.begin());
}

void Graph::check_input(const Shape& s) const {
  if (s.size() != 3 || s[2] != 3) throw ShapeError("observer input must be [H, W, 3], got " + to_string(s));
  if (s[0] < min_input_ || s[1] < min_input_) {
    throw ShapeError("observer input " + std::to_string(s[0]) + "x" + std::to_string(s[1]) +
                     " is smaller than the minimum " + std::to_string(min_input_));
  }
}

std::vector<Tensor> Graph::forward(const Tensor& image) const {
  check_input(image.shape());
  std::vector<Tensor> values(layers_.size());
  auto get = [&](std::size_t src) -> const Tensor& { return src == 0 ? image : values[src - 1]; };
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    const Tensor& x = get(wiring_[i][0]);
    switch (l.op) {
      case Op::conv2d: values[i] = ops::conv2d(x, l.weight, l.bias, l.stride); break;
      case Op::relu: values[i] = ops::relu(x); break;
      case Op::maxpool2: values[i] = ops::maxpool2(x); break;
      case Op::avgpool2: values[i] = ops::avgpool2(x); break;
      case Op::normalize: values[i] = ops::normalize(x, l.mean, l.std); break;
      case Op::concat: {
        std::vector<const Tensor*> parts;
        for (std::size_t src : wiring_[i]) parts.push_back(&get(src));
        values[i] = ops::concat_channels(parts);
        break;
      }
    }
    for (std::size_t src : wiring_[i])
      if (src > 0 && last_use_[src - 1] == i) values[src - 1] = Tensor();
  }
  std::vector<Tensor> out;
  for (std::size_t node : tap_nodes_) out.push_back(values[node]);
  return out;
}

std::vector<Var> Graph::forward(const Var& image) const {
  check_input(image.shape());
  std::vector<Var> values(layers_.size());
  auto get = [&](std::size_t src) -> const Var& { return src == 0 ? image : values[src - 1]; };
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    const Var& x = get(wiring_[i][0]);
    switch (l.op) {
      case Op::conv2d: values[i] = ad::conv2d(x, l.weight, l.bias, l.stride); break;
      case Op::relu: values[i] = ad::relu(x); break;
      case Op::maxpool2: values[i] = ad::maxpool2(x); break;
      case Op::avgpool2: values[i] = ad::avgpool2(x); break;
      case Op::normalize: values[i] = ad::normalize(x, l.mean, l.std); break;
      case Op::concat: {
        std::vector<Var> parts;
        for (std::size_t src : wiring_[i]) parts.push_back(get(src));
        values[i] = ad::concat_channels(parts);
        break;
      }
    }
  }
  std::vector<Var> out;
  for (std::size_t node : tap_nodes_) out.push_back(values[node]);
  return out;
}

}  // namespace texa::observer
