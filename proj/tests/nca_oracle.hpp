#pragma once

// f64 forward of the automaton on a square torus, written from the update
// equations with plain loops.

#include <algorithm>
#include <vector>

#include "texa/nca.hpp"

namespace texa::testing {

struct NcaDouble {
  std::size_t h, w;
  std::vector<double> s;  // [h, w, 12]
};

inline std::vector<double> perceive_f64(const NcaDouble& g) {
  static constexpr double kx[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  static constexpr double ky[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
  static constexpr double lap[9] = {1, 2, 1, 2, -12, 2, 1, 2, 1};
  const std::size_t C = nca::kChannels;
  std::vector<double> p(g.h * g.w * 4 * C, 0.0);
  for (std::size_t y = 0; y < g.h; ++y)
    for (std::size_t x = 0; x < g.w; ++x) {
      double* out = &p[(y * g.w + x) * 4 * C];
      for (std::size_t c = 0; c < C; ++c) out[c] = g.s[(y * g.w + x) * C + c];
      for (std::size_t dy = 0; dy < 3; ++dy)
        for (std::size_t dx = 0; dx < 3; ++dx) {
          const std::size_t yy = (y + g.h + dy - 1) % g.h, xx = (x + g.w + dx - 1) % g.w;
          for (std::size_t c = 0; c < C; ++c) {
            const double v = g.s[(yy * g.w + xx) * C + c];
            out[C + c] += kx[dy * 3 + dx] * v;
            out[2 * C + c] += ky[dy * 3 + dx] * v;
            out[3 * C + c] += lap[dy * 3 + dx] * v;
          }
        }
    }
  return p;
}

/// One step with every cell updating; clamped to the state band.
inline NcaDouble step_f64(const NcaDouble& g, const std::vector<Tensor>& params) {
  const Tensor &w0 = params[0], &b0 = params[1], &w1 = params[2], &b1 = params[3];
  const std::size_t C = nca::kChannels, P = nca::kPerception, H = nca::kHidden;
  const auto p = perceive_f64(g);
  NcaDouble out = g;
  std::vector<double> hidden(H);
  for (std::size_t cell = 0; cell < g.h * g.w; ++cell) {
    for (std::size_t j = 0; j < H; ++j) {
      double a = b0[j];
      for (std::size_t i = 0; i < P; ++i) a += p[cell * P + i] * w0[i * H + j];
      hidden[j] = std::max(0.0, a);
    }
    for (std::size_t c = 0; c < C; ++c) {
      double a = b1[c];
      for (std::size_t j = 0; j < H; ++j) a += hidden[j] * w1[j * C + c];
      out.s[cell * C + c] = std::clamp(g.s[cell * C + c] + a, -double(kStateBand), double(kStateBand));
    }
  }
  return out;
}

inline std::vector<double> rollout_f64(const Tensor& state, const std::vector<Tensor>& params, std::size_t steps) {
  NcaDouble g{state.dim(0), state.dim(1), std::vector<double>(state.data().begin(), state.data().end())};
  for (std::size_t t = 0; t < steps; ++t) g = step_f64(g, params);
  return g.s;
}

}  // namespace texa::testing
