// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedwing/tensor.hpp"

namespace fedwing {

enum class OptimizerKind { kGradientDescent, kAdamW };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdamW;
  double learning_rate = 0.01;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerConfig gradient_descent(double lr) {
    return {OptimizerKind::kGradientDescent, lr, 0.0};
  }
  static OptimizerConfig adamw(double lr = 0.01, double wd = 1e-4) {
    return {OptimizerKind::kAdamW, lr, wd};
  }
};

/// Optimizer over a fixed parameter list. Weight decay is decoupled: it
/// shrinks the parameters directly instead of entering the gradient.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<Tensor> params);

  /// Applies one update from the parameters' current gradients. Every
  /// parameter must have received a gradient.
  void step();
  void zero_grad();

  std::uint64_t steps() const { return step_; }
  const OptimizerConfig& config() const { return config_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  OptimizerConfig config_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::uint64_t step_ = 0;
};

}  // namespace fedwing
