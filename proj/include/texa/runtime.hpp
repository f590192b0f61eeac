#pragma once

// Post-training execution: long runs, manipulation (damage, expansion),
// row-band printing, tiled execution with halo exchange, and int8 inference.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "texa/nca.hpp"

namespace texa::runtime {

/// Model and run options disagree (hex model without hex kernels, odd hex torus, ...).
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Topology {
  torus,     // both axes wrap
  open,      // both axes clamp to the edge
  cylinder,  // columns wrap, rows clamp
};
std::string topology_name(Topology t);
Topology parse_topology(const std::string& name);
Edges edges_of(Topology t);

struct RunOptions {
  Topology topology = Topology::torus;
  bool hex = false;
  std::optional<Tensor> rotation;  // [H, W] radians
  std::vector<std::uint8_t> freeze;  // one byte per cell; empty = nothing frozen
  bool quantized = false;
  float rate = nca::kDefaultRate;
};

/// Initial noise grid and update-mask stream of a run with `seed`.
Tensor initial_state(std::size_t h, std::size_t w, std::uint64_t seed);
nca::UpdateMask run_mask(std::uint64_t seed, float rate = nca::kDefaultRate);

// --- int8 inference ----------------------------------------------------------

/// Fixed-point multiplier: x * m / 2^shift, rounded half away from zero.
struct Requant {
  std::int32_t mult = 0;
  int shift = 0;

  static Requant of(double real);
  std::int32_t apply(std::int32_t x) const;
};

struct QuantizedModel {
  nca::Geometry geometry = nca::Geometry::square;
  std::vector<std::int8_t> w0;   // [48, 96]
  std::vector<std::int32_t> b0;  // [96], scale state_scale * w0_scale
  std::vector<std::int8_t> w1;   // [96, 12]
  std::vector<std::int32_t> b1;  // [12], scale hidden_scale * w1_scale
  float w0_scale = 1, w1_scale = 1;
  float state_scale = 0;   // signed state code c has value c * state_scale
  float hidden_scale = 1;  // uint8 hidden code h has value h * hidden_scale
  nlohmann::json provenance = nlohmann::json::object();

  /// f32 weights the int8 tensors stand for.
  nca::NcaParams dequantized() const;
  void validate() const;
};

/// Per-tensor symmetric weights (QAT ranges when present, else max-abs).
/// The hidden scale comes from the QAT hidden range when the model has one,
/// else from the largest first-layer activation seen on `calibration` states.
QuantizedModel quantize_model(const nca::Model& model, const std::vector<Tensor>& calibration);
/// States visited by the float model from noise (64x64, 256 steps, every 32nd).
std::vector<Tensor> calibration_states(const nca::Model& model, std::uint64_t seed);

std::vector<std::uint8_t> encode_quantized(const QuantizedModel& model);
QuantizedModel decode_quantized(std::span<const std::uint8_t> bytes);
void save_quantized(const std::filesystem::path& path, const QuantizedModel& model);
QuantizedModel load_quantized(const std::filesystem::path& path);
/// True when the NCAM file at `path` stores int8 weights.
bool is_quantized_file(const std::filesystem::path& path);

/// Integer-only stepping of an int8 state.
class QuantizedRunner {
 public:
  QuantizedRunner(const QuantizedModel& model, Edges edges, bool hex, const Tensor* rotation);

  /// Quantizes a float grid onto the state grid.
  void load(const Tensor& state);
  /// Does not allocate once loaded.
  void step(std::span<const std::uint8_t> mask);
  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }
  const std::vector<std::int8_t>& codes() const { return state_; }
  /// Dequantized readout.
  Tensor state() const;

 private:
  void pad();

  QuantizedModel model_;
  Edges edges_;
  std::array<std::vector<std::int16_t>, 2> taps_;  // Q8 stencil taps [9][4] for even/odd rows
  std::vector<std::int16_t> cos_, sin_;            // Q14 per cell; empty without rotation
  std::vector<std::int16_t> w0_packed_, w1_packed_;
  std::vector<std::int32_t> b0_, b1_;  // padded to the kernel stride
  Requant to_hidden_, to_state_;
  std::size_t h_ = 0, w_ = 0;
  std::vector<std::int8_t> state_, padded_;
  std::vector<std::int16_t> perception_, hidden_;
  std::vector<std::int32_t> acc0_, acc1_;
  std::vector<std::uint32_t> active_;
};

// --- runner ------------------------------------------------------------------

class Runner {
 public:
  /// Throws GeometryError when `opt` cannot carry the model.
  Runner(const nca::Model& model, RunOptions opt, std::uint64_t seed);
  /// int8 model; opt.quantized is implied.
  Runner(const QuantizedModel& model, RunOptions opt, std::uint64_t seed);

  /// Noise grid of the given size; resets the step counter.
  void reset(std::size_t h, std::size_t w);
  /// Replaces the grid (keeps the step counter). Shape must stay compatible with the options.
  void set_state(const Tensor& state);
  /// Float view of the current grid (dequantized for int8 runs).
  Tensor state() const;
  std::size_t steps_done() const { return steps_; }
  const RunOptions& options() const { return opt_; }
  /// Integer engine of an int8 run, null otherwise.
  const QuantizedRunner* quantized_runner() const { return qrun_.get(); }
  void set_rotation(std::optional<Tensor> rotation);

  void step();
  /// Runs `steps` steps; `snapshot(step, state)` fires after every `every`-th step.
  void run(std::size_t steps, const std::function<void(std::size_t, const Tensor&)>& snapshot = {},
           std::size_t every = 0);

 private:
  void check(std::size_t h, std::size_t w) const;
  void rebuild_quantized();

  std::optional<nca::Model> model_;
  std::optional<QuantizedModel> qmodel_;
  nca::Geometry geometry_;
  RunOptions opt_;
  nca::KernelSet kernels_;
  std::uint64_t seed_;
  nca::UpdateMask mask_;
  std::size_t steps_ = 0;
  Tensor state_;
  std::unique_ptr<QuantizedRunner> qrun_;
};

// --- manipulation ------------------------------------------------------------

enum class DamageMode { noise, zero };

struct DamageShape {
  enum class Kind { disc, rect } kind = Kind::disc;
  double cx = 0, cy = 0, r = 0;  // disc
  std::ptrdiff_t x = 0, y = 0;   // rect origin
  std::size_t w = 0, h = 0;      // rect extent
};

/// Overwrites the cells inside `shape`; returns how many were affected.
std::size_t damage(Tensor& state, const DamageShape& shape, DamageMode mode, std::uint64_t seed);

/// Grid of the new size with the old grid copied at (anchor_y, anchor_x) and
/// noise elsewhere. Throws ShapeError when shrinking or when the old grid does not fit.
Tensor expand(const Tensor& state, std::size_t new_h, std::size_t new_w, std::size_t anchor_y,
              std::size_t anchor_x, std::uint64_t seed);

// --- printing ----------------------------------------------------------------

struct PrintOptions {
  std::size_t band = 64;
  std::size_t steps_per_band = 256;
  std::size_t context = 16;  // frozen rows of the previous band kept above the active band
};

/// Generates `rows` x `width` rows band by band on a cylinder (columns wrap).
/// Finished rows are frozen and handed to `emit` in order; the working set is
/// context + band rows. With rows == band the result equals a plain cylinder
/// run of steps_per_band steps with the same seed.
void print_rows(const nca::Model& model, std::size_t width, std::size_t rows, const PrintOptions& opt,
                std::uint64_t seed, const std::function<void(const Tensor& finished_rows)>& emit);
Tensor print_rows(const nca::Model& model, std::size_t width, std::size_t rows, const PrintOptions& opt,
                  std::uint64_t seed);

// --- tiling ------------------------------------------------------------------

struct Tile {
  std::size_t y0 = 0, x0 = 0, h = 0, w = 0;
  double rate = 1.0;
};

struct TilePlan {
  std::size_t height = 0, width = 0;
  std::vector<Tile> tiles;

  /// `cols` x `rows` near-equal tiles; rates in row-major tile order (default 1).
  static TilePlan grid(std::size_t height, std::size_t width, std::size_t cols, std::size_t rows,
                       std::vector<double> rates = {});
  /// Throws ValueError unless tiles are disjoint, cover the grid and have positive finite rates.
  void validate() const;
};

/// Number of substeps a tile of `rate` takes at wall-step t (1-based).
std::size_t substeps(double rate, std::size_t t);

/// Advances `state` by `wall_steps` exchanges. At every wall-step each tile
/// reads its halo from the grid published at the previous exchange and takes
/// substeps(rate, t) steps; its mask stream is keyed by a tile-local step
/// counter and global cell indices, so rate-1 tiles reproduce Runner exactly.
Tensor run_tiled(const nca::Model& model, const Tensor& state, const TilePlan& plan, std::size_t wall_steps,
                 std::uint64_t seed, const RunOptions& opt = {});

// --- NCAS v1 -----------------------------------------------------------------

inline constexpr char kStateMagic[] = "NCASTATE";

struct StateFile {
  std::size_t height = 0, width = 0, channels = 0;
  std::string dtype = "f32";  // f32 | int8
  float scale = 1.0f;         // int8: value = code * scale
  std::string topology = "torus";
  Tensor values;                    // f32
  std::vector<std::int8_t> codes;  // int8

  /// Float view (dequantized for int8).
  Tensor as_tensor() const;
};

void save_state(const std::filesystem::path& path, const Tensor& state, Topology topology = Topology::torus);
void save_state_int8(const std::filesystem::path& path, const std::vector<std::int8_t>& codes, std::size_t h,
                     std::size_t w, std::size_t c, float scale, Topology topology = Topology::torus);
StateFile load_state(const std::filesystem::path& path);
/// Single-channel f32 raster of angles in radians.
Tensor load_rotation_field(const std::filesystem::path& path);

}  // namespace texa::runtime
