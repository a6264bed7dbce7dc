// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "gcmae/model.hpp"
#include "gcmae/tensor.hpp"

namespace gcmae {

struct AdamOptions {
  double lr = 0.001;
  double weight_decay = 0.0001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam step over every parameter. Weight decay is
/// decoupled: w <- w - lr * wd * w happens before the moment update.
template <class T>
void adam_step(ModelParams<T>& params, const Gradients<T>& grads, const AdamOptions& opt) {
  const auto t = static_cast<double>(++params.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (auto& p : params.all()) {
    const std::size_t n = p.value.size();
    const auto* g = grads.raw(p.value.id());
    if (g != nullptr && g->size() != n) throw ShapeError("adam_step: gradient shape mismatch for " + p.name);
    const auto w = p.value.values();
    std::vector<T> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g == nullptr ? 0.0 : (*g)[i];
      double wi = static_cast<double>(w[i]);
      wi -= opt.lr * opt.weight_decay * wi;
      const double m = opt.beta1 * static_cast<double>(p.first_moment[i]) + (1.0 - opt.beta1) * gi;
      const double v = opt.beta2 * static_cast<double>(p.second_moment[i]) + (1.0 - opt.beta2) * gi * gi;
      p.first_moment[i] = static_cast<T>(m);
      p.second_moment[i] = static_cast<T>(v);
      wi -= opt.lr * (m / c1) / (std::sqrt(v / c2) + opt.eps);
      next[i] = static_cast<T>(wi);
    }
    p.value = p.value.with_values(std::move(next));
  }
}

}  // namespace gcmae
