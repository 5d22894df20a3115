#pragma once

#include <cmath>
#include <vector>

#include "nri/mlp.hpp"
#include "nri/tensor.hpp"

namespace nri {

// Adam with bias correction, beta = (0.9, 0.999), eps = 1e-8. Per-element
// arithmetic runs in double so float32 moments stay well conditioned; the
// update is deterministic.
struct AdamState {
  ParamStore m;  // first moments, parallel to the parameter store
  ParamStore v;  // second moments
  long step = 0;

  AdamState() = default;
  explicit AdamState(const ParamStore& params) {
    for (const auto& e : params.entries) {
      m.add(e.name, Tensor(e.value.shape));
      v.add(e.name, Tensor(e.value.shape));
    }
  }
};

inline void adam_step(ParamStore& params, const std::vector<Tensor>& grads, AdamState& state,
                      double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ContractError("adam_step: parameter/gradient/state count mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.entries[i].value;
    const Tensor& g = grads[i];
    if (!p.same_shape(g)) {
      throw ContractError("adam_step: gradient shape " + shape_str(g.shape) +
                          " does not match parameter '" + params.entries[i].name + "' " +
                          shape_str(p.shape));
    }
    Tensor& m = state.m.entries[i].value;
    Tensor& v = state.v.entries[i].value;
    for (std::size_t j = 0; j < p.data.size(); ++j) {
      const double gj = static_cast<double>(g.data[j]);
      const double mj = beta1 * static_cast<double>(m.data[j]) + (1.0 - beta1) * gj;
      const double vj = beta2 * static_cast<double>(v.data[j]) + (1.0 - beta2) * gj * gj;
      m.data[j] = static_cast<float>(mj);
      v.data[j] = static_cast<float>(vj);
      p.data[j] -= static_cast<float>(lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
    }
  }
}

// Rescales gradients in place so their global L2 norm is at most max_norm;
// returns the pre-clip norm.
inline double clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (const float x : g.data) sq += static_cast<double>(x) * static_cast<double>(x);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const float scale = static_cast<float>(max_norm / norm);
    for (Tensor& g : grads) {
      for (float& x : g.data) x *= scale;
    }
  }
  return norm;
}

}  // namespace nri
