#include <chrono>
#include <cmath>
#include <limits>

#include "texa/io.hpp"
#include "texa/parallel.hpp"
#include "texa/trainer.hpp"
#include "texa/version.hpp"

namespace texa::trainer {
namespace {

// Domain tags for seeds derived from the training seed.
constexpr std::uint64_t kInitTag = 0x494e4954;
constexpr std::uint64_t kPoolTag = 0x504f4f4c;
constexpr std::uint64_t kStepTag = 0x53544550;
constexpr std::uint64_t kMaskTag = 0x4d41534b;

struct BatchItem {
  ParamGrads grads;
  double loss = 0.0;
  Tensor final_state;
  float hidden_peak = 0;
  bool ok = false;
};

bool finite(const ParamGrads& g) {
  for (const Tensor& t : g)
    if (!t.all_finite()) return false;
  return true;
}

}  // namespace

std::uint64_t init_seed(std::uint64_t seed) { return rng::derive_seed(seed, kInitTag); }

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValueError("invalid training config: " + m); };
  if (size == 0) fail("size must be positive");
  if (batch == 0) fail("batch must be positive");
  if (pool < batch) fail("pool capacity " + std::to_string(pool) + " is smaller than batch " + std::to_string(batch));
  if (rollout_lo < 1 || rollout_lo > rollout_hi) fail("rollout bounds must satisfy 1 <= lo <= hi");
  if (!std::isfinite(lr) || lr < 0.0f) fail("learning rate must be finite and non-negative");
  if (!std::isfinite(lr_decay) || lr_decay < 0.0f) fail("learning-rate decay must be finite and non-negative");
  nca::check_geometry(size, size, geometry, Edges::uniform(Boundary::torus));
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"size", size},
                      {"batch", batch},
                      {"steps", steps},
                      {"rollout", {rollout_lo, rollout_hi}},
                      {"lr", lr},
                      {"lr_decay", lr_decay},
                      {"decay_step", decay_step},
                      {"pool", pool},
                      {"seed", seed},
                      {"loss", head == LossHead::texture ? "texture" : "feature"},
                      {"qat", qat},
                      {"geometry", nca::geometry_name(geometry)}};
  if (head == LossHead::feature) j["feature"] = {{"tap", feature.tap}, {"channel", feature.channel}};
  return j;
}

float Objective::loss(const Tensor& rgb) const {
  return head == LossHead::texture ? observer::texture_loss(*graph, target, rgb)
                                   : observer::feature_loss(*graph, feature, rgb);
}

Var Objective::loss(const Var& rgb) const {
  return head == LossHead::texture ? observer::texture_loss(*graph, target, rgb)
                                   : observer::feature_loss(*graph, feature, rgb);
}

Objective make_objective(const Tensor& template_rgb, const observer::Graph& graph, const TrainConfig& config) {
  Objective o;
  o.graph = &graph;
  o.head = config.head;
  o.feature = config.feature;
  if (config.head == LossHead::texture) {
    o.target = observer::make_texture_target(graph, io::resize_bilinear(template_rgb, config.size, config.size));
  } else {
    observer::feature_loss(graph, config.feature, Tensor({graph.min_input(), graph.min_input(), 3}));
  }
  return o;
}

Trainer::Trainer(const TrainConfig& config, Objective objective, nca::NcaParams init)
    : config_(config),
      objective_(std::move(objective)),
      params_(std::move(init)),
      adam_(AdamState::for_params(params_)),
      pool_(config.pool, config.size, config.size, rng::derive_seed(config.seed, kPoolTag)),
      kernels_(nca::kernels_for(config.geometry)) {
  config_.validate();
  params_.validate();
  if (!objective_.graph) throw ValueError("training objective has no observer graph");
}

StepResult Trainer::step() {
  const std::size_t k = step_++;
  const std::size_t batch = config_.batch;
  rng::Stream rs(rng::derive_seed(config_.seed, kStepTag, k));
  StepResult r;
  r.step = k;
  r.lr = config_.lr_at(k);
  r.slots = pool_.sample(batch, rs);
  r.rollout = rollout_length(rs, config_.rollout_lo, config_.rollout_hi);
  const std::uint64_t fresh_key = config_.pool + static_cast<std::uint64_t>(k) * batch;
  pool_.reseed(r.slots[0], fresh_key);

  std::vector<Tensor> start(batch);
  for (std::size_t b = 0; b < batch; ++b) start[b] = pool_.at(r.slots[b]);

  nca::StepOptions opt;
  opt.quantize_state = config_.qat;
  opt.hidden_range = config_.qat ? hidden_range_ : 0.0f;
  const nca::QatRanges ranges = nca::QatRanges::of(params_);
  const std::uint64_t mask_seed = rng::derive_seed(config_.seed, kMaskTag, k);

  std::vector<BatchItem> items(batch);
  parallel_for(batch, [&](std::size_t b) {
    BatchItem& item = items[b];
    Tape tape;
    const auto leaves = nca::ad::ParamVars::leaves(tape, params_);
    const auto used = config_.qat ? leaves.quantized(ranges) : leaves;
    const nca::UpdateMask mask{rng::derive_seed(mask_seed, b), nca::kDefaultRate};
    nca::StepOptions item_opt = opt;
    item_opt.hidden_peak = &item.hidden_peak;
    try {
      const Var final_state = nca::ad::rollout(tape.constant(std::move(start[b])), used, kernels_, r.rollout, mask, item_opt);
      const Var loss = objective_.loss(ad::slice_channels(final_state, 0, 3));
      if (!std::isfinite(loss.value().item())) return;
      const Gradients g = tape.backward(ad::scale(loss, 1.0f / static_cast<float>(batch)));
      item.grads = {g.of(leaves.w0), g.of(leaves.b0), g.of(leaves.w1), g.of(leaves.b1)};
      item.loss = loss.value().item();
      item.final_state = final_state.value();
      item.ok = finite(item.grads);
    } catch (const nca::DivergenceError&) {
      item.ok = false;
    }
  });

  bool ok = true;
  double total = 0.0;
  for (const auto& item : items) {
    ok = ok && item.ok;
    total += item.loss;
  }
  if (!ok) {
    r.diverged = true;
    r.loss = std::numeric_limits<float>::quiet_NaN();
    for (std::size_t b = 0; b < batch; ++b) pool_.reseed(r.slots[b], fresh_key + b);
    return r;
  }
  r.loss = static_cast<float>(total / static_cast<double>(batch));
  if (config_.qat) {
    float peak = 0;
    for (const auto& item : items) peak = std::max(peak, item.hidden_peak);
    if (peak > 0) hidden_range_ = hidden_range_ > 0 ? 0.9f * hidden_range_ + 0.1f * peak : peak;
  }

  ParamGrads grads = std::move(items[0].grads);
  for (std::size_t b = 1; b < batch; ++b)
    for (std::size_t i = 0; i < 4; ++i) grads[i] = ops::add(grads[i], items[b].grads[i]);
  normalize_gradients(grads);
  adam_update(params_, grads, adam_, r.lr);
  for (std::size_t b = 0; b < batch; ++b) pool_.set(r.slots[b], std::move(items[b].final_state));
  return r;
}

nca::Model Trainer::model() const {
  nca::Model m;
  m.geometry = config_.geometry;
  if (config_.qat) {
    auto ranges = nca::QatRanges::of(params_);
    ranges.hidden = hidden_range_;
    m.params = ranges.apply(params_);
    m.qat = ranges;
  } else {
    m.params = params_;
  }
  m.provenance = {{"tool", std::string("texa ") + kVersion}, {"config", config_.to_json()}, {"steps_done", step_}};
  return m;
}

FitResult fit(const Tensor& template_rgb, const observer::Graph& graph, const TrainConfig& config,
              std::ostream* metrics, const std::function<void(const StepResult&)>& on_step) {
  config.validate();
  Trainer trainer(config, make_objective(template_rgb, graph, config), nca::NcaParams::init(init_seed(config.seed)));
  FitResult result;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < config.steps; ++i) {
    StepResult r = trainer.step();
    if (r.diverged) ++result.diverged;
    if (metrics) {
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      nlohmann::json line = {{"step", r.step},         {"loss", r.diverged ? nlohmann::json() : nlohmann::json(r.loss)},
                             {"lr", r.lr},             {"rollout", r.rollout},
                             {"diverged", r.diverged}, {"wall_time", wall}};
      *metrics << line.dump() << '\n';
      metrics->flush();
    }
    if (on_step) on_step(r);
    result.log.push_back(std::move(r));
  }
  result.model = trainer.model();
  return result;
}

}  // namespace texa::trainer
