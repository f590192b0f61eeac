#pragma once

// Reverse-mode differentiation over a linear record of executed ops.
//
// A Tape owns every value produced while it records. Backward replays the
// record in exact reverse order; gradients for an operand consumed by several
// ops accumulate additively. Only first-order gradients are supported.

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "texa/ops.hpp"
#include "texa/quant.hpp"
#include "texa/tensor.hpp"

namespace texa {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Gradient buffers handed to an op's backward function, one per input.
/// `grad(i)` is null when input i does not need a gradient.
class GradSlots {
 public:
  float* grad(std::size_t input) const { return slots_[input]; }
  std::size_t size() const { return slots_.size(); }

 private:
  friend class Tape;
  std::vector<float*> slots_;
};

using BackwardFn = std::function<void(const Tensor& grad_out, const GradSlots& grads)>;

/// Gradients of a scalar with respect to the leaves of a tape.
class Gradients {
 public:
  /// Gradient for `leaf`; zeros when the loss does not depend on it.
  Tensor of(const Var& leaf) const;

 private:
  friend class Tape;
  std::unordered_map<std::uint32_t, Tensor> grads_;
  const Tape* tape_ = nullptr;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value);
  /// Input that never receives a gradient.
  Var constant(Tensor value);
  /// Appends an op result. `backward` may be empty when no input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  /// Reverse pass from a single-element `loss`.
  Gradients backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::uint32_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::uint32_t id) const { return nodes_.at(id).requires_grad; }
  bool is_leaf(std::uint32_t id) const { return nodes_.at(id).leaf; }

 private:
  struct Node {
    Tensor value;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool leaf = false;
  };
  void check_owner(const Var& v) const;

  std::deque<Node> nodes_;
};

/// Differentiable counterparts of texa::ops. Constant operands (masks, angles,
/// observer weights, targets) are passed as plain tensors.
namespace ad {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float s);
Var sum(const Var& a);
Var mean(const Var& a);
Var relu(const Var& a);
/// Straight-through inside [lo, hi], zero gradient outside.
Var clamp(const Var& a, float lo, float hi);
Var conv2d_depthwise(const Var& input, const Stencil& stencil, Edges edges,
                     ChannelOrder order = ChannelOrder::interleaved);
/// With `rows`, only the listed pixels are computed (see ops::matmul_pointwise).
Var matmul_pointwise(const Var& input, const Var& weight, const Var& bias,
                     std::shared_ptr<const std::vector<std::uint32_t>> rows = nullptr);
Var gram(const Var& features);
Var maxpool2(const Var& x);
Var avgpool2(const Var& x);
Var concat_channels(std::span<const Var> parts);
Var slice_channels(const Var& x, std::size_t begin, std::size_t end);
Var conv2d(const Var& x, const Tensor& weight, const Tensor& bias, std::size_t stride);
Var normalize(const Var& x, std::span<const float> mean, std::span<const float> std);
Var rotate_gradients(const Var& perception, const Tensor& alpha, std::size_t channels);
Var masked_add(const Var& s, const Var& ds, std::vector<std::uint8_t> mask);
/// Rounds onto `grid`; straight-through inside the grid's range, zero outside.
Var fake_quantize(const Var& x, const QuantGrid& grid);

}  // namespace ad
}  // namespace texa
