#pragma once

// Backpropagation-through-time training of the update rule against an
// observer loss, with a persistent pool of grid states.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "texa/nca.hpp"
#include "texa/observer.hpp"
#include "texa/rng.hpp"

namespace texa::trainer {

struct AdamState {
  std::array<Tensor, 4> m, v;  // moments, shaped like W0, b0, W1, b1
  std::uint64_t t = 0;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;

  static AdamState for_params(const nca::NcaParams& params);
};

using ParamGrads = std::array<Tensor, 4>;

/// One bias-corrected Adam step. Throws ValueError on non-finite gradients
/// (params and moments are left untouched).
void adam_update(nca::NcaParams& params, const ParamGrads& grads, AdamState& adam, float lr);

/// Scales every tensor to unit L2 norm (all-zero tensors stay zero).
void normalize_gradients(ParamGrads& grads);

/// Uniform integer over [lo, hi]. Throws ValueError unless 1 <= lo <= hi.
std::size_t rollout_length(rng::Stream& rng, std::size_t lo, std::size_t hi);

/// Fixed-capacity set of grid states. Untouched slots hold the fresh noise
/// state for their index, generated on first access.
class StatePool {
 public:
  StatePool(std::size_t capacity, std::size_t height, std::size_t width, std::uint64_t seed);

  std::size_t capacity() const { return slots_.size(); }
  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }

  const Tensor& at(std::size_t i);
  void set(std::size_t i, Tensor state);
  /// Puts the fresh noise state for `key` into slot i.
  void reseed(std::size_t i, std::uint64_t key);
  /// `count` distinct slot indices.
  std::vector<std::size_t> sample(std::size_t count, rng::Stream& rng) const;
  Tensor fresh(std::uint64_t key) const;

 private:
  std::size_t h_, w_;
  std::uint64_t seed_;
  std::vector<std::optional<Tensor>> slots_;
};

enum class LossHead { texture, feature };

struct TrainConfig {
  std::size_t size = 128;
  std::size_t batch = 4;
  std::size_t steps = 8000;
  std::size_t rollout_lo = 32;
  std::size_t rollout_hi = 64;
  float lr = 2e-3f;
  float lr_decay = 0.1f;
  std::size_t decay_step = 2000;
  std::size_t pool = 1024;
  std::uint64_t seed = 0;
  LossHead head = LossHead::texture;
  observer::FeatureTargetSpec feature;
  bool qat = false;
  nca::Geometry geometry = nca::Geometry::square;

  void validate() const;
  float lr_at(std::size_t step) const { return step < decay_step ? lr : lr * lr_decay; }
  nlohmann::json to_json() const;
};

/// What the rollout's RGB readout is scored against.
struct Objective {
  const observer::Graph* graph = nullptr;
  LossHead head = LossHead::texture;
  observer::TextureTarget target;
  observer::FeatureTargetSpec feature;

  float loss(const Tensor& rgb) const;
  Var loss(const Var& rgb) const;
};

struct StepResult {
  std::size_t step = 0;
  float loss = 0;
  float lr = 0;
  std::size_t rollout = 0;
  bool diverged = false;
  std::vector<std::size_t> slots;
};

class Trainer {
 public:
  Trainer(const TrainConfig& config, Objective objective, nca::NcaParams init);

  /// One sample / rollout / backward / update cycle.
  StepResult step();

  const nca::NcaParams& params() const { return params_; }
  const AdamState& adam() const { return adam_; }
  StatePool& pool() { return pool_; }
  std::size_t steps_done() const { return step_; }
  const TrainConfig& config() const { return config_; }
  /// With QAT: running estimate of the largest hidden activation, which tops
  /// the simulated hidden grid (0 before the first step).
  float hidden_range() const { return hidden_range_; }
  /// Trained model; with QAT the weights are rounded onto their grids.
  nca::Model model() const;

 private:
  TrainConfig config_;
  Objective objective_;
  nca::NcaParams params_;
  AdamState adam_;
  StatePool pool_;
  nca::KernelSet kernels_;
  std::size_t step_ = 0;
  float hidden_range_ = 0;
};

struct FitResult {
  nca::Model model;
  std::vector<StepResult> log;
  std::size_t diverged = 0;
};

/// Resizes `template_rgb` to the training grid, builds the objective and runs
/// config.steps training steps. Each step is written to `metrics` as one JSON
/// line (step, loss, lr, rollout, diverged, wall_time) when given.
FitResult fit(const Tensor& template_rgb, const observer::Graph& graph, const TrainConfig& config,
              std::ostream* metrics = nullptr, const std::function<void(const StepResult&)>& on_step = {});

/// Objective for the given config; the template is resized to config.size.
Objective make_objective(const Tensor& template_rgb, const observer::Graph& graph, const TrainConfig& config);

/// Seed of the initial parameters for a training seed.
std::uint64_t init_seed(std::uint64_t seed);

}  // namespace texa::trainer
