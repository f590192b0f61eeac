#include <algorithm>

#include "texa/nca.hpp"

namespace texa::nca {
namespace {

void check_state(const Tensor& state, const char* what) {
  require_rank(state, 3, what);
  if (state.dim(2) != kChannels) {
    throw ShapeError(std::string(what) + ": state has " + std::to_string(state.dim(2)) + " channels, expected " +
                     std::to_string(kChannels));
  }
}

void check_rotation(const Tensor* rotation, std::size_t h, std::size_t w) {
  if (!rotation) return;
  if (rotation->rank() != 2 || rotation->dim(0) != h || rotation->dim(1) != w) {
    throw ShapeError("rotation field shape " + to_string(rotation->shape()) + " does not match grid " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  if (!rotation->all_finite()) throw ValueError("rotation field contains non-finite angles");
}

Tensor interior(const Tensor& padded) {
  const std::size_t h = padded.dim(0) - 2, w = padded.dim(1) - 2, c = padded.dim(2);
  Tensor out({h, w, c});
  for (std::size_t y = 0; y < h; ++y)
    std::copy_n(padded.raw() + ((y + 1) * (w + 2) + 1) * c, w * c, out.raw() + y * w * c);
  return out;
}

Tensor finish_step(const Tensor& state, const Tensor& p, const NcaParams& params,
                   std::span<const std::uint8_t> mask, const StepOptions& opt, std::size_t step_index) {
  if (mask.size() != state.dim(0) * state.dim(1)) {
    throw ShapeError("update mask has " + std::to_string(mask.size()) + " cells, grid has " +
                     std::to_string(state.dim(0) * state.dim(1)));
  }
  const auto cells = active_cells(mask);
  const Tensor ds = update_rule(p, params, &cells, opt);
  if (!ds.all_finite()) throw DivergenceError(step_index, "non-finite update");
  Tensor out = ops::clamp(ops::masked_add(state, ds, mask), -kStateBand, kStateBand);
  if (opt.quantize_state) out = ops::fake_quantize(out, state_grid());
  return out;
}

void observe_peak(const Tensor& hidden, const StepOptions& opt) {
  if (!opt.hidden_peak) return;
  for (float v : hidden.data()) *opt.hidden_peak = std::max(*opt.hidden_peak, v);
}

}  // namespace

Tensor perceive(const Tensor& state, const KernelSet& kernels, const StepOptions& opt) {
  check_state(state, "perceive");
  check_rotation(opt.rotation, state.dim(0), state.dim(1));
  Tensor p = ops::conv2d_depthwise(state, kernels.stencil, opt.edges, ChannelOrder::blocked);
  if (opt.rotation) p = ops::rotate_gradients(p, *opt.rotation, kChannels);
  return p;
}

Tensor perceive_padded(const Tensor& padded, const KernelSet& kernels, std::size_t row0, const Tensor* rotation) {
  check_state(padded, "perceive");
  Tensor p = ops::depthwise_padded(padded, kernels.stencil, ChannelOrder::blocked, row0);
  check_rotation(rotation, p.dim(0), p.dim(1));
  if (rotation) p = ops::rotate_gradients(p, *rotation, kChannels);
  return p;
}

Tensor update_rule(const Tensor& p, const NcaParams& params, const std::vector<std::uint32_t>* cells,
                   const StepOptions& opt) {
  Tensor hidden = ops::relu(ops::matmul_pointwise(p, params.w0, params.b0, cells));
  observe_peak(hidden, opt);
  if (opt.hidden_range > 0) hidden = ops::fake_quantize(hidden, hidden_grid(opt.hidden_range));
  return ops::matmul_pointwise(hidden, params.w1, params.b1, cells);
}

Tensor step(const Tensor& state, const NcaParams& params, const KernelSet& kernels,
            std::span<const std::uint8_t> mask, const StepOptions& opt, std::size_t step_index) {
  if (opt.quantize_state) {
    const Tensor s = ops::fake_quantize(state, state_grid());
    return finish_step(s, perceive(s, kernels, opt), params, mask, opt, step_index);
  }
  return finish_step(state, perceive(state, kernels, opt), params, mask, opt, step_index);
}

Tensor step_padded(const Tensor& padded, const NcaParams& params, const KernelSet& kernels, std::size_t row0,
                   std::span<const std::uint8_t> mask, const StepOptions& opt, std::size_t step_index) {
  if (opt.quantize_state) {
    const Tensor q = ops::fake_quantize(padded, state_grid());
    return finish_step(interior(q), perceive_padded(q, kernels, row0, opt.rotation), params, mask, opt, step_index);
  }
  const Tensor p = perceive_padded(padded, kernels, row0, opt.rotation);
  return finish_step(interior(padded), p, params, mask, opt, step_index);
}

Tensor rollout(Tensor state, const NcaParams& params, const KernelSet& kernels, std::size_t steps,
               const UpdateMask& mask, const StepOptions& opt, std::uint64_t first_step) {
  check_state(state, "rollout");
  const std::size_t h = state.dim(0), w = state.dim(1);
  for (std::size_t t = 0; t < steps; ++t) {
    const auto bits = mask.bits(first_step + t, h, w);
    state = step(state, params, kernels, bits, opt, t);
  }
  return state;
}

namespace ad {

ParamVars ParamVars::leaves(Tape& tape, const NcaParams& p) {
  return {tape.leaf(p.w0), tape.leaf(p.b0), tape.leaf(p.w1), tape.leaf(p.b1)};
}

ParamVars ParamVars::constants(Tape& tape, const NcaParams& p) {
  return {tape.constant(p.w0), tape.constant(p.b0), tape.constant(p.w1), tape.constant(p.b1)};
}

ParamVars ParamVars::quantized(const QatRanges& r) const {
  return {texa::ad::fake_quantize(w0, weight_grid(r.w0)), texa::ad::fake_quantize(b0, weight_grid(r.b0)),
          texa::ad::fake_quantize(w1, weight_grid(r.w1)), texa::ad::fake_quantize(b1, weight_grid(r.b1))};
}

Var perceive(const Var& state, const KernelSet& kernels, const StepOptions& opt) {
  check_state(state.value(), "perceive");
  check_rotation(opt.rotation, state.shape()[0], state.shape()[1]);
  Var p = texa::ad::conv2d_depthwise(state, kernels.stencil, opt.edges, ChannelOrder::blocked);
  if (opt.rotation) p = texa::ad::rotate_gradients(p, *opt.rotation, kChannels);
  return p;
}

Var update_rule(const Var& p, const ParamVars& params, std::shared_ptr<const std::vector<std::uint32_t>> cells,
                const StepOptions& opt) {
  Var hidden = texa::ad::relu(texa::ad::matmul_pointwise(p, params.w0, params.b0, cells));
  observe_peak(hidden.value(), opt);
  if (opt.hidden_range > 0) hidden = texa::ad::fake_quantize(hidden, hidden_grid(opt.hidden_range));
  return texa::ad::matmul_pointwise(hidden, params.w1, params.b1, cells);
}

Var step(const Var& input, const ParamVars& params, const KernelSet& kernels, std::vector<std::uint8_t> mask,
         const StepOptions& opt, std::size_t step_index) {
  const Var state = opt.quantize_state ? texa::ad::fake_quantize(input, state_grid()) : input;
  const Tensor& s = state.value();
  check_state(s, "step");
  if (mask.size() != s.dim(0) * s.dim(1)) {
    throw ShapeError("update mask has " + std::to_string(mask.size()) + " cells, grid has " +
                     std::to_string(s.dim(0) * s.dim(1)));
  }
  auto cells = std::make_shared<const std::vector<std::uint32_t>>(active_cells(mask));
  const Var ds = update_rule(perceive(state, kernels, opt), params, std::move(cells), opt);
  if (!ds.value().all_finite()) throw DivergenceError(step_index, "non-finite update");
  Var out = texa::ad::clamp(texa::ad::masked_add(state, ds, std::move(mask)), -kStateBand, kStateBand);
  if (opt.quantize_state) out = texa::ad::fake_quantize(out, state_grid());
  return out;
}

Var rollout(Var state, const ParamVars& params, const KernelSet& kernels, std::size_t steps, const UpdateMask& mask,
            const StepOptions& opt, std::uint64_t first_step) {
  check_state(state.value(), "rollout");
  const std::size_t h = state.shape()[0], w = state.shape()[1];
  for (std::size_t t = 0; t < steps; ++t) state = step(state, params, kernels, mask.bits(first_step + t, h, w), opt, t);
  return state;
}

}  // namespace ad
}  // namespace texa::nca
