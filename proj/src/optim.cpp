// SPDX-License-Identifier: Apache-2.0
#include "fedwing/optim.hpp"

#include <cmath>

#include "fedwing/error.hpp"

namespace fedwing {

Optimizer::Optimizer(OptimizerConfig config, std::vector<Tensor> params)
    : config_(config), params_(std::move(params)) {
  for (const auto& p : params_) {
    if (!p.defined() || !p.is_leaf() || !p.requires_grad()) {
      fail("optim", "optimizer parameters must be leaf tensors that require gradients");
    }
    if (config_.kind == OptimizerKind::kAdamW) {
      first_.emplace_back(p.numel(), 0.0);
      second_.emplace_back(p.numel(), 0.0);
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Optimizer::step() {
  for (const auto& p : params_) {
    if (!p.has_grad()) fail("optim", "parameter " + shape_string(p.shape()) + " has no gradient");
  }
  ++step_;
  const double lr = config_.learning_rate;
  const double decay = 1.0 - lr * config_.weight_decay;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto values = p.mutable_values();
    const auto& g = p.node()->grad;
    if (config_.kind == OptimizerKind::kGradientDescent) {
      for (std::size_t j = 0; j < values.size(); ++j) {
        if (config_.weight_decay != 0.0) values[j] *= decay;
        values[j] -= lr * g[j];
      }
      continue;
    }
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    auto& m = first_[i];
    auto& v = second_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      if (config_.weight_decay != 0.0) values[j] *= decay;
      values[j] -= lr * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace fedwing
