#include "texa/runtime.hpp"

namespace texa::runtime {
namespace {
constexpr std::uint64_t kStateTag = 0x53544154;
constexpr std::uint64_t kMaskTag = 0x4d41534b;
}  // namespace

std::string topology_name(Topology t) {
  switch (t) {
    case Topology::torus: return "torus";
    case Topology::open: return "open";
    case Topology::cylinder: return "cylinder";
  }
  return "?";
}

Topology parse_topology(const std::string& name) {
  for (Topology t : {Topology::torus, Topology::open, Topology::cylinder})
    if (topology_name(t) == name) return t;
  throw ValueError("unknown topology '" + name + "'");
}

Edges edges_of(Topology t) {
  switch (t) {
    case Topology::torus: return Edges::uniform(Boundary::torus);
    case Topology::open: return Edges::uniform(Boundary::clamp);
    case Topology::cylinder: return {Boundary::clamp, Boundary::torus};
  }
  return {};
}

Tensor initial_state(std::size_t h, std::size_t w, std::uint64_t seed) {
  return nca::noise_state(h, w, rng::derive_seed(seed, kStateTag));
}

nca::UpdateMask run_mask(std::uint64_t seed, float rate) { return {rng::derive_seed(seed, kMaskTag), rate}; }

Runner::Runner(const nca::Model& model, RunOptions opt, std::uint64_t seed)
    : model_(model), geometry_(model.geometry), opt_(std::move(opt)), seed_(seed), mask_(run_mask(seed, opt_.rate)) {
  model.params.validate();
  if (geometry_ == nca::Geometry::hex && !opt_.hex) {
    throw GeometryError("model was trained on a hex grid; run it with hex kernels");
  }
  kernels_ = nca::kernels_for(opt_.hex ? nca::Geometry::hex : nca::Geometry::square);
  if (opt_.quantized) {
    qmodel_ = quantize_model(model, calibration_states(model, seed));
    model_.reset();
  }
}

Runner::Runner(const QuantizedModel& model, RunOptions opt, std::uint64_t seed)
    : qmodel_(model), geometry_(model.geometry), opt_(std::move(opt)), seed_(seed), mask_(run_mask(seed, opt_.rate)) {
  opt_.quantized = true;
  if (geometry_ == nca::Geometry::hex && !opt_.hex) {
    throw GeometryError("model was trained on a hex grid; run it with hex kernels");
  }
  kernels_ = nca::kernels_for(opt_.hex ? nca::Geometry::hex : nca::Geometry::square);
}

void Runner::check(std::size_t h, std::size_t w) const {
  try {
    nca::check_geometry(h, w, opt_.hex ? nca::Geometry::hex : nca::Geometry::square, edges_of(opt_.topology));
  } catch (const ShapeError& e) {
    throw GeometryError(e.what());
  }
  if (opt_.rotation && opt_.rotation->shape() != Shape{h, w}) {
    throw GeometryError("rotation field " + to_string(opt_.rotation->shape()) + " does not match grid " +
                        std::to_string(h) + "x" + std::to_string(w));
  }
  if (!opt_.freeze.empty() && opt_.freeze.size() != h * w) throw GeometryError("freeze mask does not match the grid");
}

void Runner::rebuild_quantized() {
  qrun_ = std::make_unique<QuantizedRunner>(*qmodel_, edges_of(opt_.topology), opt_.hex,
                                            opt_.rotation ? &*opt_.rotation : nullptr);
}

void Runner::reset(std::size_t h, std::size_t w) {
  check(h, w);
  steps_ = 0;
  set_state(initial_state(h, w, seed_));
}

void Runner::set_state(const Tensor& state) {
  require_rank(state, 3, "runner state");
  check(state.dim(0), state.dim(1));
  if (state.dim(2) != nca::kChannels) throw ShapeError("runner state must have 12 channels");
  if (opt_.quantized) {
    if (!qrun_) rebuild_quantized();
    qrun_->load(state);
  } else {
    state_ = state;
  }
}

void Runner::set_rotation(std::optional<Tensor> rotation) {
  opt_.rotation = std::move(rotation);
  if (opt_.quantized && qrun_) {
    const Tensor s = qrun_->state();
    rebuild_quantized();
    qrun_->load(s);
  }
}

Tensor Runner::state() const {
  if (opt_.quantized) return qrun_ ? qrun_->state() : Tensor();
  return state_;
}

void Runner::step() {
  const std::size_t h = opt_.quantized ? qrun_->height() : state_.dim(0);
  const std::size_t w = opt_.quantized ? qrun_->width() : state_.dim(1);
  auto bits = mask_.bits(steps_, h, w);
  const bool frozen = !opt_.freeze.empty();
  if (frozen)
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = opt_.freeze[i] ? 0 : bits[i];
  if (opt_.quantized) {
    qrun_->step(bits);
  } else {
    nca::StepOptions so;
    so.edges = edges_of(opt_.topology);
    so.rotation = opt_.rotation ? &*opt_.rotation : nullptr;
    so.quantize_state = model_->qat.has_value();
    so.hidden_range = model_->qat ? model_->qat->hidden : 0.0f;
    Tensor next = nca::step(state_, model_->params, kernels_, bits, so, steps_);
    if (frozen) {
      constexpr std::size_t c = nca::kChannels;
      for (std::size_t i = 0; i < bits.size(); ++i)
        if (opt_.freeze[i]) std::copy_n(state_.raw() + i * c, c, next.raw() + i * c);
    }
    state_ = std::move(next);
  }
  ++steps_;
}

void Runner::run(std::size_t steps, const std::function<void(std::size_t, const Tensor&)>& snapshot,
                 std::size_t every) {
  if (!opt_.quantized && state_.empty()) throw ValueError("runner has no state; call reset first");
  if (opt_.quantized && !qrun_) throw ValueError("runner has no state; call reset first");
  for (std::size_t i = 0; i < steps; ++i) {
    step();
    if (snapshot && every > 0 && steps_ % every == 0) snapshot(steps_, state());
  }
}

}  // namespace texa::runtime
