// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gsifn/core/error.hpp"

namespace gsifn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled (AdamW-style) decay: p -= lr * weight_decay * p.
  double weight_decay = 0.0;
};

template <class T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update in place. State buffers are sized lazily.
template <class T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw Error("adam", "learning rate must be positive, got " + std::to_string(cfg.lr));
  if (grads.size() != params.size()) {
    throw ShapeError("adam: " + std::to_string(params.size()) + " params vs " + std::to_string(grads.size()) +
                     " grads");
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), T(0));
    state.v.assign(params.size(), T(0));
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam: state size does not match params");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    state.m[i] = static_cast<T>(m);
    state.v[i] = static_cast<T>(v);
    const double update = (m / bc1) / (std::sqrt(v / bc2) + cfg.eps) + cfg.weight_decay * params[i];
    params[i] = static_cast<T>(params[i] - cfg.lr * update);
  }
}

}  // namespace gsifn
