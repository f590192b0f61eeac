#pragma once

// Fixed-weight feature extractor (a DAG of conv / relu / pool / concat /
// normalize layers) and the losses built on its activations.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "texa/autodiff.hpp"
#include "texa/tensor.hpp"

namespace texa::observer {

enum class Op { conv2d, relu, maxpool2, avgpool2, concat, normalize };
std::string op_name(Op op);
Op parse_op(const std::string& name);

/// Name of the implicit graph input node.
inline constexpr char kInput[] = "input";

struct Layer {
  std::string name;
  Op op = Op::relu;
  std::vector<std::string> inputs;  // node names; "input" is the image
  Tensor weight;                    // conv2d: [KH, KW, CIN, COUT]
  Tensor bias;                      // conv2d: [COUT]
  std::size_t stride = 1;
  std::vector<float> mean, std;  // normalize
};

class Graph {
 public:
  Graph() = default;
  /// Orders layers topologically and validates wiring, shapes and weights.
  /// Throws ValueError on cycles, unknown inputs, unreachable taps or non-finite weights.
  Graph(std::vector<Layer> layers, std::vector<std::string> taps, std::vector<float> tap_weights = {});

  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<std::string>& taps() const { return taps_; }
  const std::vector<float>& tap_weights() const { return tap_weights_; }
  /// Smallest square input every tap accepts (2^pooling depth).
  std::size_t min_input() const { return min_input_; }
  std::size_t tap_index(const std::string& name) const;
  /// Channel count of every tap.
  const std::vector<std::size_t>& tap_channels() const { return tap_channels_; }

  /// Tap activations in tap order. Throws ShapeError for undersized or non-RGB input.
  std::vector<Tensor> forward(const Tensor& image) const;
  std::vector<Var> forward(const Var& image) const;

 private:
  void check_input(const Shape& shape) const;

  std::vector<Layer> layers_;
  std::vector<std::string> taps_;
  std::vector<float> tap_weights_;
  std::vector<std::size_t> tap_channels_;
  std::vector<std::vector<std::size_t>> wiring_;  // per layer: producer index + 1 (0 = input)
  std::vector<std::size_t> tap_nodes_;            // layer index of each tap
  std::vector<std::size_t> last_use_;             // last consumer of each layer's output
  std::size_t min_input_ = 1;
};

struct TextureTarget {
  std::vector<std::string> taps;
  std::vector<Tensor> grams;
  std::vector<float> weights;
};

TextureTarget make_texture_target(const Graph& graph, const Tensor& image);
/// sum over taps of weight * mean((G(image) - G_target)^2).
float texture_loss(const Graph& graph, const TextureTarget& target, const Tensor& image);
Var texture_loss(const Graph& graph, const TextureTarget& target, const Var& image);

struct FeatureTargetSpec {
  std::string tap;
  std::size_t channel = 0;
};
/// Negative spatial mean of one tap channel.
float feature_loss(const Graph& graph, const FeatureTargetSpec& spec, const Tensor& image);
Var feature_loss(const Graph& graph, const FeatureTargetSpec& spec, const Var& image);

// --- OBSV v1 -----------------------------------------------------------------

inline constexpr char kObserverMagic[] = "OBSVNET1";

std::vector<std::uint8_t> encode_graph(const Graph& graph);
Graph decode_graph(std::span<const std::uint8_t> bytes);
void save_graph(const std::filesystem::path& path, const Graph& graph);
Graph load_graph(const std::filesystem::path& path);

// --- builders ----------------------------------------------------------------

/// Per-channel ImageNet statistics for [0, 1] RGB.
inline constexpr float kImagenetMean[3] = {0.485f, 0.456f, 0.406f};
inline constexpr float kImagenetStd[3] = {0.229f, 0.224f, 0.225f};

/// Three conv/relu stages (32, 64, 64 channels) with two 2x2 max pools and
/// random He-scaled weights; taps are the three relu outputs.
Graph random_texture_net(std::uint64_t seed);

/// VGG-16 convolutional layout up to `last_tap` (conv1_1 .. conv5_1) with
/// random weights. Taps are the relu outputs conv1_1, conv2_1, ... up to last_tap.
Graph vgg16_layout(std::uint64_t seed, const std::string& last_tap = "conv5_1");

/// He-uniform conv weight [k, k, cin, cout] and a small uniform bias.
Layer random_conv(const std::string& name, const std::string& input, std::size_t k, std::size_t cin,
                  std::size_t cout, std::uint64_t seed, std::size_t stride = 1);

}  // namespace texa::observer
