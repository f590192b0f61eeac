#include <algorithm>
#include <cmath>

#include "texa/parallel.hpp"
#include "texa/runtime.hpp"

namespace texa::runtime {

TilePlan TilePlan::grid(std::size_t height, std::size_t width, std::size_t cols, std::size_t rows,
                        std::vector<double> rates) {
  if (cols == 0 || rows == 0 || cols > width || rows > height) {
    throw ValueError("cannot split " + std::to_string(height) + "x" + std::to_string(width) + " into " +
                     std::to_string(cols) + "x" + std::to_string(rows) + " tiles");
  }
  if (!rates.empty() && rates.size() != cols * rows) {
    throw ValueError("got " + std::to_string(rates.size()) + " rates for " + std::to_string(cols * rows) + " tiles");
  }
  TilePlan plan;
  plan.height = height;
  plan.width = width;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      Tile t;
      t.y0 = height * r / rows;
      t.h = height * (r + 1) / rows - t.y0;
      t.x0 = width * c / cols;
      t.w = width * (c + 1) / cols - t.x0;
      t.rate = rates.empty() ? 1.0 : rates[r * cols + c];
      plan.tiles.push_back(t);
    }
  }
  plan.validate();
  return plan;
}

void TilePlan::validate() const {
  if (tiles.empty()) throw ValueError("tile plan has no tiles");
  std::vector<std::uint8_t> owner(height * width, 0);
  for (const Tile& t : tiles) {
    if (t.h == 0 || t.w == 0 || t.y0 + t.h > height || t.x0 + t.w > width) {
      throw ValueError("tile at (" + std::to_string(t.y0) + ", " + std::to_string(t.x0) + ") leaves the grid");
    }
    if (!std::isfinite(t.rate) || !(t.rate > 0.0)) throw ValueError("tile rates must be positive and finite");
    for (std::size_t y = t.y0; y < t.y0 + t.h; ++y)
      for (std::size_t x = t.x0; x < t.x0 + t.w; ++x) {
        if (owner[y * width + x]) {
          throw ValueError("tiles overlap at cell (" + std::to_string(y) + ", " + std::to_string(x) + ")");
        }
        owner[y * width + x] = 1;
      }
  }
  if (std::find(owner.begin(), owner.end(), 0) != owner.end()) throw ValueError("tiles do not cover the grid");
}

std::size_t substeps(double rate, std::size_t t) {
  if (t == 0) return 0;
  const auto now = static_cast<std::size_t>(std::floor(rate * static_cast<double>(t)));
  const auto before = static_cast<std::size_t>(std::floor(rate * static_cast<double>(t - 1)));
  return now - before;
}

namespace {

std::size_t source(std::ptrdiff_t i, std::size_t n, Boundary b) {
  const auto sn = static_cast<std::ptrdiff_t>(n);
  if (b == Boundary::torus) return static_cast<std::size_t>(((i % sn) + sn) % sn);
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, sn - 1));
}

// Tile interior from its own latest values, halo from the published grid.
Tensor tile_padded(const Tensor& published, const Tensor& local, const Tile& t, Edges edges) {
  constexpr std::size_t c = nca::kChannels;
  const std::size_t gh = published.dim(0), gw = published.dim(1);
  Tensor out({t.h + 2, t.w + 2, c});
  for (std::size_t py = 0; py < t.h + 2; ++py) {
    const std::size_t gy = source(static_cast<std::ptrdiff_t>(t.y0 + py) - 1, gh, edges.rows);
    for (std::size_t px = 0; px < t.w + 2; ++px) {
      const std::size_t gx = source(static_cast<std::ptrdiff_t>(t.x0 + px) - 1, gw, edges.cols);
      const bool own = gy >= t.y0 && gy < t.y0 + t.h && gx >= t.x0 && gx < t.x0 + t.w;
      const float* src = own ? local.raw() + ((gy - t.y0) * t.w + gx - t.x0) * c : published.raw() + (gy * gw + gx) * c;
      std::copy_n(src, c, out.raw() + (py * (t.w + 2) + px) * c);
    }
  }
  return out;
}

Tensor crop(const Tensor& grid, const Tile& t) {
  const std::size_t c = grid.rank() == 3 ? grid.dim(2) : 1, gw = grid.dim(1);
  Tensor out(grid.rank() == 3 ? Shape{t.h, t.w, c} : Shape{t.h, t.w});
  for (std::size_t y = 0; y < t.h; ++y)
    std::copy_n(grid.raw() + ((t.y0 + y) * gw + t.x0) * c, t.w * c, out.raw() + y * t.w * c);
  return out;
}

}  // namespace

Tensor run_tiled(const nca::Model& model, const Tensor& state, const TilePlan& plan, std::size_t wall_steps,
                 std::uint64_t seed, const RunOptions& opt) {
  plan.validate();
  require_rank(state, 3, "run_tiled");
  if (state.dim(0) != plan.height || state.dim(1) != plan.width || state.dim(2) != nca::kChannels) {
    throw ShapeError("tile plan " + std::to_string(plan.height) + "x" + std::to_string(plan.width) +
                     " does not match state " + to_string(state.shape()));
  }
  if (opt.quantized || !opt.freeze.empty()) throw ValueError("tiled runs support neither int8 nor frozen cells");
  if (model.geometry == nca::Geometry::hex && !opt.hex) throw GeometryError("hex model needs hex kernels");
  const Edges edges = edges_of(opt.topology);
  try {
    nca::check_geometry(plan.height, plan.width, opt.hex ? nca::Geometry::hex : nca::Geometry::square, edges);
  } catch (const ShapeError& e) {
    throw GeometryError(e.what());
  }
  if (opt.rotation && opt.rotation->shape() != Shape{plan.height, plan.width}) {
    throw GeometryError("rotation field does not match the grid");
  }
  const nca::KernelSet kernels = nca::kernels_for(opt.hex ? nca::Geometry::hex : nca::Geometry::square);
  const nca::UpdateMask mask = run_mask(seed, opt.rate);

  struct TileRun {
    Tensor local;
    std::optional<Tensor> rotation;
    std::size_t counter = 0;
  };
  std::vector<TileRun> runs(plan.tiles.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    runs[i].local = crop(state, plan.tiles[i]);
    if (opt.rotation) runs[i].rotation = crop(*opt.rotation, plan.tiles[i]);
  }
  Tensor published = state;
  for (std::size_t t = 1; t <= wall_steps; ++t) {
    parallel_for(runs.size(), [&](std::size_t i) {
      const Tile& tile = plan.tiles[i];
      TileRun& run = runs[i];
      nca::StepOptions so;
      so.edges = edges;
      so.rotation = run.rotation ? &*run.rotation : nullptr;
      so.quantize_state = model.qat.has_value();
      so.hidden_range = model.qat ? model.qat->hidden : 0.0f;
      for (std::size_t n = substeps(tile.rate, t); n > 0; --n) {
        const Tensor padded = tile_padded(published, run.local, tile, edges);
        const auto bits = mask.bits(run.counter, tile.y0, tile.x0, tile.h, tile.w, plan.width);
        run.local = nca::step_padded(padded, model.params, kernels, tile.y0, bits, so, run.counter);
        ++run.counter;
      }
    });
    constexpr std::size_t c = nca::kChannels;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const Tile& tile = plan.tiles[i];
      for (std::size_t y = 0; y < tile.h; ++y)
        std::copy_n(runs[i].local.raw() + y * tile.w * c, tile.w * c,
                    published.raw() + ((tile.y0 + y) * plan.width + tile.x0) * c);
    }
  }
  return published;
}

}  // namespace texa::runtime
