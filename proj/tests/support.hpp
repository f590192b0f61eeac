#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "texa/autodiff.hpp"
#include "texa/tensor.hpp"

namespace texa::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(std::move(shape));
  for (float& v : t.mutable_data()) v = dist(gen);
  return t;
}

/// Values in [-1, 1] kept at least `gap` away from zero (for ops with a kink at 0).
inline Tensor away_from_zero(Shape shape, std::uint64_t seed, float gap = 0.05f) {
  Tensor t = random_tensor(std::move(shape), seed);
  for (float& v : t.mutable_data()) {
    if (std::fabs(v) < gap) v = v < 0 ? v - gap : v + gap;
  }
  return t;
}

struct FdReport {
  std::size_t checked = 0;
  std::size_t passed = 0;
  double worst = 0;
  double pass_rate() const { return checked ? double(passed) / double(checked) : 1.0; }
};

using Build = std::function<Var(Tape&, const std::vector<Var>&)>;
/// f64 evaluation of the same function, flattened in the op's output order.
using Reference = std::function<std::vector<double>(const std::vector<Tensor>&)>;

/// Central differences of L = sum(r * build(inputs)) against the tape gradient.
/// L is accumulated in f64 from the f32 op output, or from `reference` when
/// given (deep compositions, where f32 rounding at h = 1e-3 is as large as the
/// tolerance). A coordinate passes when
/// |analytic - numeric| <= rel * max(|analytic|, |numeric|, floor).
inline FdReport finite_difference(const Build& build, std::vector<Tensor> inputs, std::uint64_t seed,
                                  float h = 1e-3f, double rel = 1e-3, double floor = 1e-2,
                                  std::size_t max_coords = 64, const Reference& reference = {}) {
  Tensor r;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(tape.constant(x));
    r = random_tensor(build(tape, vars).shape(), seed ^ 0x5eed, 0.5f, 1.5f);
  }
  auto eval = [&](const std::vector<Tensor>& xs) {
    std::vector<double> y;
    if (reference) {
      y = reference(xs);
    } else {
      Tape tape;
      std::vector<Var> vars;
      for (const auto& x : xs) vars.push_back(tape.constant(x));
      const Tensor t = build(tape, vars).value();
      y.assign(t.data().begin(), t.data().end());
    }
    double acc = 0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += double(r[i]) * y[i];
    return acc;
  };

  Tape tape;
  std::vector<Var> leaves;
  for (const auto& x : inputs) leaves.push_back(tape.leaf(x));
  const Var y = build(tape, leaves);
  const Var loss = ad::sum(ad::mul(y, tape.constant(r)));
  const Gradients grads = tape.backward(loss);

  FdReport report;
  std::mt19937_64 pick(seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor g = grads.of(leaves[k]);
    std::vector<std::size_t> coords(inputs[k].size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    std::shuffle(coords.begin(), coords.end(), pick);
    if (coords.size() > max_coords) coords.resize(max_coords);
    for (const std::size_t i : coords) {
      std::vector<Tensor> plus = inputs, minus = inputs;
      plus[k][i] += h;
      minus[k][i] -= h;
      const double step = double(plus[k][i]) - double(minus[k][i]);
      const double numeric = (eval(plus) - eval(minus)) / step;
      const double analytic = g[i];
      const double scale = std::max({std::fabs(analytic), std::fabs(numeric), floor});
      const double err = std::fabs(analytic - numeric) / scale;
      report.worst = std::max(report.worst, err);
      ++report.checked;
      if (err <= rel) ++report.passed;
    }
  }
  return report;
}

}  // namespace texa::testing
