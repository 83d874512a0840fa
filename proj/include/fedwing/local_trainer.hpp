// SPDX-License-Identifier: Apache-2.0
//
// Client-side optimization: forecasting objectives, the prompt-wise local
// loss with global / personalized / neighbor regularizers, neighbor
// selection and the local update loop.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedwing/data_io.hpp"
#include "fedwing/fm.hpp"
#include "fedwing/head.hpp"
#include "fedwing/optim.hpp"
#include "fedwing/prompts.hpp"
#include "fedwing/tensor.hpp"

namespace fedwing {

class Rng;

enum class PromptDistance { kSquaredEuclidean, kCosine };

struct LocalLossConfig {
  double lambda = 0.7;
  double tau = 0.3;
  std::size_t subgraph_step = 1;  // S_G
  std::size_t local_epochs = 5;
  std::size_t batch_size = 256;
  PromptDistance distance = PromptDistance::kSquaredEuclidean;
  void validate() const;
};

/// Reference prompt vectors delivered at round start. An empty global or
/// personalized vector drops that term.
struct RegularizerTargets {
  std::vector<double> global;
  std::vector<double> personalized;
  std::vector<std::vector<double>> neighbors;
  bool empty() const { return global.empty() && personalized.empty() && neighbors.empty(); }
};

struct LocalLoss {
  Tensor total;  // differentiable scalar (includes the constant term)
  double mse = 0.0;
  double global_term = 0.0;
  double personalized_term = 0.0;
  double neighbor_term = 0.0;
  double constant = 0.0;  // 4 (log2 lambda + log2 tau)
  bool neighbor_skipped = false;
};

/// MSE(pred, truth) + L(P_i, P*) / lambda^2 + L(P_i, P_i^l) / lambda^2
///   + 1 / (tau^2 (|N| - 1)) * sum_j L(P_i, P_j^l) + 4 (log2 lambda + log2 tau)
/// `prompt` is the client's flattened prompt vector ([1 x D]). With one or
/// no neighbors the neighbor term is skipped and a warning logged.
LocalLoss local_loss(const Tensor& prediction, const Tensor& truth, const Tensor& prompt,
                     const RegularizerTargets& targets, const LocalLossConfig& config);

/// Plain MSE wrapped in the same breakdown (used when regularizers are off).
LocalLoss plain_loss(const Tensor& prediction, const Tensor& truth);

struct NeighborCandidate {
  std::size_t id = 0;
  GeoEncoding geo;
};

/// Orders the other participants by great-circle distance to `self` (ties by
/// id) and keeps ranks 1, 1+S_G, 1+2 S_G, ...
std::vector<std::size_t> neighbor_select(const std::vector<NeighborCandidate>& participants,
                                         std::size_t self, std::size_t subgraph_step);

enum class TuningMode {
  kPrompts,  // prompts + local linear head (+ graph-mixed FM layer copies)
  kHead,     // frozen FM without prompts, shared dense head
};

struct ClientState {
  std::size_t id = 0;
  std::string name;
  GeoEncoding geo;
  TuningMode mode = TuningMode::kPrompts;
  Task task = Task::kMultivariate;

  AdaptivePromptSet prompts;  // prompts used in training and evaluation
  DenseHead head;
  ParameterOverrides layers;  // per-client FM layer copies (may be empty)
  RegularizerTargets references;
  bool regularize = false;

  ForecastWindows train, validation, test;
  NormalizationStats stats;

  std::size_t sample_count() const { return train.size(); }

  /// Flattened FM outputs of the training windows, filled lazily in head mode.
  std::vector<double> train_features;
};

struct LocalTrainConfig {
  LocalLossConfig loss;
  OptimizerConfig optimizer = OptimizerConfig::adamw(0.01, 1e-4);
  bool train_layers = false;  // optimize the FM layer copies in ClientState::layers
};

struct LocalUpdateResult {
  std::vector<double> epoch_losses;  // mean local loss over each epoch's batches
  std::vector<double> epoch_mse;
  IterationTrace temporal;  // last epoch's prompt iteration
  IterationTrace variable;
};

/// Each epoch: prompt iteration (no gradients, first shuffled window), then
/// one pass over the shuffled training windows in mini-batches.
LocalUpdateResult local_update(ClientState& state, const FoundationModel& fm,
                               const LocalTrainConfig& config, Rng& rng);

/// window: [P x n] history -> [Q x k] forecast (k = 1 for univariate).
Tensor forecast(const ClientState& state, const FoundationModel& fm, const Tensor& window);

/// Batched predictions [batch x Q*k] for windows of one split (eval mode).
Tensor predict(ClientState& state, const FoundationModel& fm, const ForecastWindows& windows,
               std::span<const std::size_t> indices);

/// Flattened FM features for head mode: [batch x P*n].
Tensor fm_features(const FoundationModel& fm, const Tensor& inputs);

}  // namespace fedwing
