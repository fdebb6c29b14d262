#pragma once

#include "activebc/nn/param_store.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>

namespace activebc::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction, applied to every parameter from its stored
// gradient. The step counter is incremented before use.
template <typename T>
void adam_step(ParamStore<T>& store, const AdamConfig& cfg) {
  ++store.step;
  const double t = static_cast<double>(store.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(cfg.lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(cfg.eps);
  for (auto& p : store.params()) {
    if (p.grad.shape != p.value.shape || p.m.shape != p.value.shape || p.v.shape != p.value.shape)
      throw std::invalid_argument("adam shape mismatch for " + p.name);
    check_finite(p.grad.data, "adam_step");
    const std::size_t n = p.value.size();
    T* w = p.value.ptr();
    T* m = p.m.ptr();
    T* v = p.v.ptr();
    const T* g = p.grad.ptr();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

// Variant taking gradients explicitly; they are copied into the store first.
template <typename T>
void adam_step(ParamStore<T>& store, const std::vector<Tensor<T>>& grads, const AdamConfig& cfg) {
  auto& ps = store.params();
  if (grads.size() != ps.size()) throw std::invalid_argument("adam: gradient count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (grads[i].shape != ps[i].value.shape)
      throw std::invalid_argument("adam: gradient shape mismatch for " + ps[i].name);
    ps[i].grad = grads[i];
  }
  adam_step(store, cfg);
}

}  // namespace activebc::nn
