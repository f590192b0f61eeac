#include <cmath>

#include "texa/nca.hpp"

namespace texa::nca {
namespace {

// taps[k] is a row-major 3x3 window; stored as [3, 3, K].
Tensor pack(const std::array<std::array<float, 9>, kKernels>& taps) {
  Tensor t({3, 3, kKernels});
  for (std::size_t k = 0; k < kKernels; ++k)
    for (std::size_t i = 0; i < 9; ++i) t[i * kKernels + k] = taps[k][i];
  return t;
}

constexpr std::array<float, 9> kIdentity = {0, 0, 0, 0, 1, 0, 0, 0, 0};

// Neighbour (row, col) window slots and unit offsets for one row parity.
struct Neighbour {
  int slot;
  float dx, dy;
};

Tensor hex_taps(bool odd_row) {
  const float h = std::sqrt(3.0f) / 2.0f;
  // Rows above and below hold two neighbours each; on even rows they are the
  // columns x-1 and x, on odd rows x and x+1.
  const int left = odd_row ? 1 : 0;
  const std::array<Neighbour, 6> nb = {{
      {0 * 3 + left, -0.5f, -h},
      {0 * 3 + left + 1, 0.5f, -h},
      {1 * 3 + 0, -1.0f, 0.0f},
      {1 * 3 + 2, 1.0f, 0.0f},
      {2 * 3 + left, -0.5f, h},
      {2 * 3 + left + 1, 0.5f, h},
  }};
  // 8/3 rounded to a multiple of 2^-20: every partial sum of up to six taps is
  // exact, so the Laplacian cancels to zero in any summation order.
  constexpr float gain = 2796203.0f / 1048576.0f;
  std::array<std::array<float, 9>, kKernels> taps{};
  taps[0] = kIdentity;
  for (const auto& n : nb) {
    taps[1][n.slot] = gain * n.dx;
    taps[2][n.slot] = gain * n.dy;
    taps[3][n.slot] = gain;
  }
  taps[3][4] = -6.0f * gain;
  return pack(taps);
}

}  // namespace

std::string geometry_name(Geometry g) { return g == Geometry::hex ? "hex" : "square"; }

Geometry parse_geometry(const std::string& name) {
  if (name == "square") return Geometry::square;
  if (name == "hex") return Geometry::hex;
  throw ValueError("unknown geometry '" + name + "'");
}

KernelSet square_kernels() {
  static const Tensor taps = pack({{
      kIdentity,
      {-1, 0, 1, -2, 0, 2, -1, 0, 1},
      {-1, -2, -1, 0, 0, 0, 1, 2, 1},
      {1, 2, 1, 2, -12, 2, 1, 2, 1},
  }});
  return {Stencil{taps, Tensor()}, Geometry::square};
}

KernelSet hex_kernels() {
  static const Tensor even = hex_taps(false);
  static const Tensor odd = hex_taps(true);
  return {Stencil{even, odd}, Geometry::hex};
}

KernelSet kernels_for(Geometry g) { return g == Geometry::hex ? hex_kernels() : square_kernels(); }

void check_geometry(std::size_t h, std::size_t w, Geometry geometry, Edges edges) {
  if (h == 0 || w == 0) throw ShapeError("grid must be non-empty, got " + std::to_string(h) + "x" + std::to_string(w));
  if (geometry == Geometry::hex && edges.rows == Boundary::torus && h % 2 != 0) {
    throw ShapeError("hex grid with wrapped rows needs an even height, got " + std::to_string(h));
  }
}

}  // namespace texa::nca
