#include <cmath>

#include "texa/trainer.hpp"

namespace texa::trainer {

AdamState AdamState::for_params(const nca::NcaParams& params) {
  AdamState a;
  const auto ts = params.tensors();
  for (std::size_t i = 0; i < 4; ++i) {
    a.m[i] = Tensor(ts[i]->shape());
    a.v[i] = Tensor(ts[i]->shape());
  }
  return a;
}

void adam_update(nca::NcaParams& params, const ParamGrads& grads, AdamState& adam, float lr) {
  const auto ts = params.tensors();
  for (std::size_t i = 0; i < 4; ++i) {
    require_same_shape(*ts[i], grads[i], "adam_update");
    require_same_shape(adam.m[i], grads[i], "adam_update moments");
    if (!grads[i].all_finite()) throw ValueError("adam_update: non-finite gradient");
  }
  adam.t += 1;
  const double t = static_cast<double>(adam.t);
  const float c1 = static_cast<float>(1.0 - std::pow(static_cast<double>(adam.beta1), t));
  const float c2 = static_cast<float>(1.0 - std::pow(static_cast<double>(adam.beta2), t));
  for (std::size_t i = 0; i < 4; ++i) {
    float* p = ts[i]->raw();
    float* m = adam.m[i].raw();
    float* v = adam.v[i].raw();
    const float* g = grads[i].raw();
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      m[j] = adam.beta1 * m[j] + (1.0f - adam.beta1) * g[j];
      v[j] = adam.beta2 * v[j] + (1.0f - adam.beta2) * g[j] * g[j];
      if (lr != 0.0f) p[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + adam.eps);
    }
  }
}

void normalize_gradients(ParamGrads& grads) {
  for (Tensor& g : grads) {
    double sq = 0.0;
    for (float v : g.data()) sq += static_cast<double>(v) * v;
    if (sq == 0.0) continue;
    const float norm = static_cast<float>(std::sqrt(sq));
    for (float& v : g.mutable_data()) v /= norm;
  }
}

}  // namespace texa::trainer
