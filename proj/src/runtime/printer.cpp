#include <algorithm>

#include "texa/runtime.hpp"

namespace texa::runtime {
namespace {

Tensor rows_of(const Tensor& s, std::size_t begin, std::size_t end) {
  const std::size_t w = s.dim(1), c = s.dim(2);
  Tensor out({end - begin, w, c});
  std::copy_n(s.raw() + begin * w * c, (end - begin) * w * c, out.raw());
  return out;
}

}  // namespace

void print_rows(const nca::Model& model, std::size_t width, std::size_t rows, const PrintOptions& opt,
                std::uint64_t seed, const std::function<void(const Tensor&)>& emit) {
  if (opt.band == 0) throw ValueError("print band must be at least one row");
  const bool hex = model.geometry == nca::Geometry::hex;
  if (hex && (opt.band % 2 != 0 || opt.context % 2 != 0)) {
    throw GeometryError("hex printing needs even band and context heights");
  }
  constexpr std::size_t c = nca::kChannels;
  Tensor context;
  std::size_t printed = 0;
  for (std::uint64_t band = 0; printed < rows; ++band) {
    const std::size_t n = std::min(opt.band, rows - printed);
    const std::size_t ctx = context.empty() ? 0 : context.dim(0);
    RunOptions ro;
    ro.topology = Topology::cylinder;
    ro.hex = hex;
    ro.freeze.assign((ctx + n) * width, 0);
    std::fill_n(ro.freeze.begin(), ctx * width, std::uint8_t{1});
    Runner runner(model, std::move(ro), band == 0 ? seed : rng::derive_seed(seed, band));
    runner.reset(ctx + n, width);
    if (ctx > 0) {
      Tensor s = runner.state();
      std::copy_n(context.raw(), ctx * width * c, s.raw());
      runner.set_state(s);
    }
    runner.run(opt.steps_per_band);
    const Tensor window = runner.state();
    emit(rows_of(window, ctx, ctx + n));
    printed += n;
    const std::size_t keep = std::min(opt.context, ctx + n);
    context = keep == 0 ? Tensor() : rows_of(window, ctx + n - keep, ctx + n);
  }
}

Tensor print_rows(const nca::Model& model, std::size_t width, std::size_t rows, const PrintOptions& opt,
                  std::uint64_t seed) {
  Tensor out({rows, width, nca::kChannels});
  std::size_t y = 0;
  print_rows(model, width, rows, opt, seed, [&](const Tensor& band) {
    std::copy_n(band.raw(), band.size(), out.raw() + y * width * nca::kChannels);
    y += band.dim(0);
  });
  return out;
}

}  // namespace texa::runtime
