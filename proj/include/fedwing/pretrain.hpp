// SPDX-License-Identifier: Apache-2.0
//
// Masked reconstruction pre-training of the foundation model, run as FedAvg
// over clients.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedwing/fm.hpp"
#include "fedwing/optim.hpp"
#include "fedwing/tensor.hpp"

namespace fedwing {

class Rng;

struct MaskSpec {
  double rate = 0.15;               // r
  double mean_masked_length = 3.0;  // l_m

  /// l_u = (1 - r) / r * l_m
  double mean_unmasked_length() const { return (1.0 - rate) / rate * mean_masked_length; }
  void validate() const;
};

/// Binary [length x variables] mask (1 = keep, 0 = masked). Each variable
/// alternates masked / unmasked runs with geometric lengths of mean l_m and
/// l_u; the first run is masked with probability r.
Tensor generate_mask(std::size_t length, std::size_t variables, const MaskSpec& spec, Rng& rng);

/// Mean squared error over masked (mask == 0) cells only.
Tensor pretrain_loss(const Tensor& truth, const Tensor& prediction, const Tensor& mask);

/// One client's pre-training data: row-major [rows x features] series.
struct PretrainClient {
  std::size_t features = 0;
  std::vector<double> train;
  std::vector<double> validation;
  std::size_t train_rows() const { return features ? train.size() / features : 0; }
  std::size_t validation_rows() const { return features ? validation.size() / features : 0; }
};

struct PretrainConfig {
  std::size_t rounds = 20;
  std::size_t local_epochs = 20;
  double participation = 0.5;
  std::size_t window = 24;
  std::size_t batch_size = 256;
  std::size_t validation_windows = 64;
  MaskSpec mask;
  OptimizerConfig optimizer = OptimizerConfig::adamw(1e-3, 1e-4);
  std::uint64_t seed = 1;
};

struct PretrainRound {
  std::size_t round = 0;
  std::vector<std::size_t> participants;
  double train_loss = 0.0;       // mean over participants of their last local loss
  double validation_loss = 0.0;  // masked MSE of the aggregated model
};

struct PretrainResult {
  FoundationModel model;
  std::vector<PretrainRound> curve;
};

/// Masked MSE of `model` on fixed, seed-determined masks over each client's
/// validation windows (sample-weighted across clients).
double pretrain_validation_loss(const FoundationModel& model,
                                const std::vector<PretrainClient>& clients,
                                const PretrainConfig& config);

PretrainResult federated_pretrain(const std::vector<PretrainClient>& clients,
                                  const FoundationModel& initial, const PretrainConfig& config);

}  // namespace fedwing
