#include "texa/observer.hpp"

namespace texa::observer {
namespace {

std::vector<std::size_t> resolve(const Graph& graph, const TextureTarget& target) {
  if (target.grams.size() != target.taps.size() || target.weights.size() != target.taps.size()) {
    throw ValueError("texture target has inconsistent tap, gram and weight counts");
  }
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < target.taps.size(); ++t) {
    const std::size_t i = graph.tap_index(target.taps[t]);
    const std::size_t c = graph.tap_channels()[i];
    if (target.grams[t].shape() != Shape{c, c}) {
      throw ValueError("target gram for tap '" + target.taps[t] + "' has shape " +
                       to_string(target.grams[t].shape()) + ", tap has " + std::to_string(c) + " channels");
    }
    idx.push_back(i);
  }
  return idx;
}

std::size_t feature_tap(const Graph& graph, const FeatureTargetSpec& spec) {
  const std::size_t i = graph.tap_index(spec.tap);
  if (spec.channel >= graph.tap_channels()[i]) {
    throw ValueError("feature channel " + std::to_string(spec.channel) + " out of range for tap '" + spec.tap +
                     "' with " + std::to_string(graph.tap_channels()[i]) + " channels");
  }
  return i;
}

}  // namespace

TextureTarget make_texture_target(const Graph& graph, const Tensor& image) {
  TextureTarget t;
  const auto features = graph.forward(image);
  t.taps = graph.taps();
  t.weights = graph.tap_weights();
  for (const Tensor& f : features) t.grams.push_back(ops::gram(f));
  return t;
}

float texture_loss(const Graph& graph, const TextureTarget& target, const Tensor& image) {
  const auto idx = resolve(graph, target);
  const auto features = graph.forward(image);
  Tensor total = Tensor::scalar(0.0f);
  for (std::size_t t = 0; t < idx.size(); ++t) {
    const Tensor d = ops::sub(ops::gram(features[idx[t]]), target.grams[t]);
    total = ops::add(total, ops::scale(ops::mean(ops::mul(d, d)), target.weights[t]));
  }
  return total.item();
}

Var texture_loss(const Graph& graph, const TextureTarget& target, const Var& image) {
  const auto idx = resolve(graph, target);
  const auto features = graph.forward(image);
  Tape& tape = image.tape();
  Var total = tape.constant(Tensor::scalar(0.0f));
  for (std::size_t t = 0; t < idx.size(); ++t) {
    const Var d = ad::sub(ad::gram(features[idx[t]]), tape.constant(target.grams[t]));
    total = ad::add(total, ad::scale(ad::mean(ad::mul(d, d)), target.weights[t]));
  }
  return total;
}

float feature_loss(const Graph& graph, const FeatureTargetSpec& spec, const Tensor& image) {
  const std::size_t i = feature_tap(graph, spec);
  const auto features = graph.forward(image);
  return ops::scale(ops::mean(ops::slice_channels(features[i], spec.channel, spec.channel + 1)), -1.0f).item();
}

Var feature_loss(const Graph& graph, const FeatureTargetSpec& spec, const Var& image) {
  const std::size_t i = feature_tap(graph, spec);
  const auto features = graph.forward(image);
  return ad::scale(ad::mean(ad::slice_channels(features[i], spec.channel, spec.channel + 1)), -1.0f);
}

}  // namespace texa::observer
