#pragma once

// The texture cellular automaton: fixed perception stencils, a per-cell
// two-layer update network, and stochastic masked application.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "texa/autodiff.hpp"
#include "texa/ops.hpp"
#include "texa/quant.hpp"
#include "texa/rng.hpp"
#include "texa/tensor.hpp"

namespace texa::nca {

inline constexpr std::size_t kChannels = 12;
inline constexpr std::size_t kKernels = 4;
inline constexpr std::size_t kPerception = kChannels * kKernels;  // 48
inline constexpr std::size_t kHidden = 96;
inline constexpr std::size_t kParamCount = kPerception * kHidden + kHidden + kHidden * kChannels + kChannels;
inline constexpr float kDefaultRate = 0.5f;

enum class Geometry { square, hex };
std::string geometry_name(Geometry g);
Geometry parse_geometry(const std::string& name);

/// Identity, x-gradient, y-gradient and Laplacian stencils, in that order.
struct KernelSet {
  Stencil stencil;
  Geometry geometry = Geometry::square;
};

/// Sobel pair and 9-point Laplacian on the square lattice.
KernelSet square_kernels();
/// Six-neighbour stencils on an even-row-offset raster (odd rows sit half a
/// cell to the right). Gradients project the unit neighbour offsets onto the
/// axes; the Laplacian is sum(neighbours) - 6 * centre. Both carry a factor
/// of (almost exactly) 8/3 so ramps and quadratic bowls respond as on the square lattice.
KernelSet hex_kernels();
KernelSet kernels_for(Geometry g);

struct NcaParams {
  Tensor w0;  // [48, 96]
  Tensor b0;  // [96]
  Tensor w1;  // [96, 12]
  Tensor b1;  // [12]

  static NcaParams zeros();
  /// He-uniform first layer, zero second layer: the initial rule is the identity map.
  static NcaParams init(std::uint64_t seed);

  std::size_t count() const { return w0.size() + b0.size() + w1.size() + b1.size(); }
  std::array<const Tensor*, 4> tensors() const { return {&w0, &b0, &w1, &b1}; }
  std::array<Tensor*, 4> tensors() { return {&w0, &b0, &w1, &b1}; }
  bool all_finite() const;
  void validate() const;

  friend bool operator==(const NcaParams&, const NcaParams&) = default;
};

/// Per-tensor weight ranges recorded by quantization-aware training.
struct QatRanges {
  float w0 = 0, b0 = 0, w1 = 0, b1 = 0;  // symmetric max-abs
  float state_lo = -kStateBand;
  float state_hi = kStateBand;
  float hidden = 0;  // top of the hidden-activation grid [0, hidden]; 0 = not simulated

  static QatRanges of(const NcaParams& params);
  /// params rounded onto their per-tensor 8-bit grids.
  NcaParams apply(const NcaParams& params) const;
};

/// Symmetric 8-bit grid for a weight tensor; a degenerate range (all zeros)
/// falls back to a unit grid so zero stays representable.
QuantGrid weight_grid(float max_abs);
/// Asymmetric 8-bit grid [0, max] for the (non-negative) hidden activations.
QuantGrid hidden_grid(float max);

struct Model {
  NcaParams params;
  Geometry geometry = Geometry::square;
  std::optional<QatRanges> qat;
  nlohmann::json provenance = nlohmann::json::object();
};

// --- state and masks ---------------------------------------------------------

/// Uniform [0, 1) noise for every channel of an [h, w, 12] grid.
Tensor noise_state(std::size_t h, std::size_t w, std::uint64_t seed);

/// Update gate: bit for cell index y * W + x at step t is a function of
/// (seed, t, index) alone.
struct UpdateMask {
  std::uint64_t seed = 0;
  float rate = kDefaultRate;

  /// One byte per cell of an [h, w] grid.
  std::vector<std::uint8_t> bits(std::uint64_t step, std::size_t h, std::size_t w) const;
  /// Bytes for the cells of a window [y0, y0 + h) x [x0, x0 + w) inside a grid `grid_w` wide.
  std::vector<std::uint8_t> bits(std::uint64_t step, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w,
                                 std::size_t grid_w) const;
};

/// Indices of the set bytes.
std::vector<std::uint32_t> active_cells(std::span<const std::uint8_t> mask);

/// Non-finite update produced at `step`.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& what);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct StepOptions {
  Edges edges = Edges::uniform(Boundary::torus);
  const Tensor* rotation = nullptr;  // [H, W] radians
  /// Read the state through the 8-bit state grid and round the new state onto it (models trained with QAT).
  bool quantize_state = false;
  /// > 0: round hidden activations onto hidden_grid(hidden_range).
  float hidden_range = 0;
  /// When set, raised to the largest hidden activation seen (before rounding).
  float* hidden_peak = nullptr;
};

/// Throws ShapeError unless the grid can carry `geometry` under `edges`
/// (a hex torus needs an even height).
void check_geometry(std::size_t h, std::size_t w, Geometry geometry, Edges edges);

// --- forward -----------------------------------------------------------------

/// [H, W, 48] perception: [state | gx | gy | lap] blocks.
Tensor perceive(const Tensor& state, const KernelSet& kernels, const StepOptions& opt = {});
/// Perception of the interior of an already padded [H + 2, W + 2, 12] buffer
/// whose first interior row is global row `row0`.
Tensor perceive_padded(const Tensor& padded, const KernelSet& kernels, std::size_t row0, const Tensor* rotation);

/// relu(p W0 + b0) W1 + b1. With `cells`, only those rows are evaluated (others zero).
/// The hidden layer is rounded and observed as `opt` asks.
Tensor update_rule(const Tensor& p, const NcaParams& params, const std::vector<std::uint32_t>* cells = nullptr,
                   const StepOptions& opt = {});

/// s' = clamp(mask ? s + f(p) : s, -S, S), optionally rounded onto the state grid.
/// Throws DivergenceError(step_index) when the update is not finite.
Tensor step(const Tensor& state, const NcaParams& params, const KernelSet& kernels,
            std::span<const std::uint8_t> mask, const StepOptions& opt = {}, std::size_t step_index = 0);
/// Same update for the interior of a padded buffer (tiled execution).
Tensor step_padded(const Tensor& padded, const NcaParams& params, const KernelSet& kernels, std::size_t row0,
                   std::span<const std::uint8_t> mask, const StepOptions& opt, std::size_t step_index = 0);

/// `steps` applications of step() with masks drawn at step keys first_step, first_step + 1, ...
Tensor rollout(Tensor state, const NcaParams& params, const KernelSet& kernels, std::size_t steps,
               const UpdateMask& mask, const StepOptions& opt = {}, std::uint64_t first_step = 0);

// --- differentiable ----------------------------------------------------------

namespace ad {

struct ParamVars {
  Var w0, b0, w1, b1;
  static ParamVars leaves(Tape& tape, const NcaParams& params);
  static ParamVars constants(Tape& tape, const NcaParams& params);
  /// Fake-quantized view on the per-tensor grids of `ranges` (straight-through).
  ParamVars quantized(const QatRanges& ranges) const;
};

Var perceive(const Var& state, const KernelSet& kernels, const StepOptions& opt = {});
Var update_rule(const Var& p, const ParamVars& params,
                std::shared_ptr<const std::vector<std::uint32_t>> cells = nullptr, const StepOptions& opt = {});
Var step(const Var& state, const ParamVars& params, const KernelSet& kernels, std::vector<std::uint8_t> mask,
         const StepOptions& opt = {}, std::size_t step_index = 0);
Var rollout(Var state, const ParamVars& params, const KernelSet& kernels, std::size_t steps, const UpdateMask& mask,
            const StepOptions& opt = {}, std::uint64_t first_step = 0);

}  // namespace ad

// --- NCAM v1 -----------------------------------------------------------------

inline constexpr char kModelMagic[] = "NCAMODEL";

/// Header of an NCAM file without decoding the weights.
nlohmann::json read_model_header(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_model(const Model& model);
/// Decodes an f32 model. Throws io::FormatError for int8 files or bad layouts.
Model decode_model(std::span<const std::uint8_t> bytes);
void save_model(const std::filesystem::path& path, const Model& model);
Model load_model(const std::filesystem::path& path);

}  // namespace texa::nca
