#include <cmath>

#include "texa/observer.hpp"
#include "texa/rng.hpp"

namespace texa::observer {
namespace {

Layer normalize_layer() {
  Layer l;
  l.name = "normalize";
  l.op = Op::normalize;
  l.inputs = {kInput};
  l.mean.assign(kImagenetMean, kImagenetMean + 3);
  l.std.assign(kImagenetStd, kImagenetStd + 3);
  return l;
}

Layer unary(const std::string& name, Op op, const std::string& input) {
  Layer l;
  l.name = name;
  l.op = op;
  l.inputs = {input};
  return l;
}

}  // namespace

Layer random_conv(const std::string& name, const std::string& input, std::size_t k, std::size_t cin,
                  std::size_t cout, std::uint64_t seed, std::size_t stride) {
  Layer l;
  l.name = name;
  l.op = Op::conv2d;
  l.inputs = {input};
  l.stride = stride;
  l.weight = Tensor({k, k, cin, cout});
  l.bias = Tensor({cout});
  rng::Stream s(seed);
  const float limit = std::sqrt(6.0f / static_cast<float>(k * k * cin));
  for (float& v : l.weight.mutable_data()) v = (2.0f * rng::unit_float(s.next_u32()) - 1.0f) * limit;
  for (float& v : l.bias.mutable_data()) v = (2.0f * rng::unit_float(s.next_u32()) - 1.0f) * 0.05f;
  return l;
}

Graph random_texture_net(std::uint64_t seed) {
  std::vector<Layer> layers;
  layers.push_back(normalize_layer());
  layers.push_back(random_conv("conv1_1_linear", "normalize", 3, 3, 32, rng::derive_seed(seed, 1)));
  layers.push_back(unary("conv1_1", Op::relu, "conv1_1_linear"));
  layers.push_back(unary("pool1", Op::maxpool2, "conv1_1"));
  layers.push_back(random_conv("conv2_1_linear", "pool1", 3, 32, 64, rng::derive_seed(seed, 2)));
  layers.push_back(unary("conv2_1", Op::relu, "conv2_1_linear"));
  layers.push_back(unary("pool2", Op::maxpool2, "conv2_1"));
  layers.push_back(random_conv("conv3_1_linear", "pool2", 3, 64, 64, rng::derive_seed(seed, 3)));
  layers.push_back(unary("conv3_1", Op::relu, "conv3_1_linear"));
  return Graph(std::move(layers), {"conv1_1", "conv2_1", "conv3_1"});
}

Graph vgg16_layout(std::uint64_t seed, const std::string& last_tap) {
  // Blocks of (conv count, width); the first conv of block b is tapped as conv{b}_1.
  const std::size_t blocks[5][2] = {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};
  std::vector<Layer> layers;
  std::vector<std::string> taps;
  layers.push_back(normalize_layer());
  std::string prev = "normalize";
  std::size_t cin = 3;
  std::uint64_t n = 0;
  for (std::size_t b = 0; b < 5; ++b) {
    if (b > 0) {
      const std::string pool = "pool" + std::to_string(b);
      layers.push_back(unary(pool, Op::maxpool2, prev));
      prev = pool;
    }
    for (std::size_t i = 0; i < blocks[b][0]; ++i) {
      const std::string name = "conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1);
      layers.push_back(random_conv(name + "_linear", prev, 3, cin, blocks[b][1], rng::derive_seed(seed, ++n)));
      layers.push_back(unary(name, Op::relu, name + "_linear"));
      prev = name;
      cin = blocks[b][1];
      if (i == 0) taps.push_back(name);
      if (name == last_tap) return Graph(std::move(layers), std::move(taps));
    }
  }
  if (taps.back() != last_tap) throw ValueError("unknown VGG-16 tap '" + last_tap + "'");
  return Graph(std::move(layers), std::move(taps));
}

}  // namespace texa::observer
