// SPDX-License-Identifier: Apache-2.0
#include "fedwing/local_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "fedwing/error.hpp"
#include "fedwing/graph_server.hpp"
#include "fedwing/logging.hpp"
#include "fedwing/ops.hpp"
#include "fedwing/rng.hpp"

namespace fedwing {
namespace {

const char* kModule = "local-trainer";
constexpr std::size_t kEvalChunk = 256;

Tensor distance(const Tensor& prompt, const std::vector<double>& reference, PromptDistance kind) {
  if (reference.size() != prompt.numel()) {
    fail(kModule, "reference prompt has " + std::to_string(reference.size()) +
                      " values, client prompt has " + std::to_string(prompt.numel()));
  }
  Tensor ref = Tensor::from(prompt.shape(), reference);
  return kind == PromptDistance::kCosine ? ops::cosine_distance(prompt, ref)
                                         : ops::squared_distance(prompt, ref);
}

std::vector<Tensor> trainable(const ClientState& state, bool train_layers) {
  std::vector<Tensor> params;
  if (state.mode == TuningMode::kPrompts) params = state.prompts.tensors();
  for (const auto& t : state.head.parameters()) params.push_back(t);
  if (train_layers && state.mode == TuningMode::kPrompts) {
    for (const auto& [name, t] : state.layers) params.push_back(t);
  }
  return params;
}

ForwardOptions eval_options(const ClientState& state) {
  ForwardOptions o;
  o.train = false;
  o.overrides = state.layers.empty() ? nullptr : &state.layers;
  return o;
}

void ensure_train_features(ClientState& state, const FoundationModel& fm) {
  const std::size_t width = state.train.history() * state.train.features();
  if (state.train_features.size() == state.train.size() * width) return;
  NoGradGuard guard;
  state.train_features.clear();
  state.train_features.reserve(state.train.size() * width);
  std::vector<std::size_t> idx;
  for (std::size_t b = 0; b < state.train.size(); b += kEvalChunk) {
    idx.resize(std::min(kEvalChunk, state.train.size() - b));
    std::iota(idx.begin(), idx.end(), b);
    const Tensor f = fm_features(fm, state.train.inputs(idx));
    state.train_features.insert(state.train_features.end(), f.values().begin(), f.values().end());
  }
}

Tensor gather_features(const ClientState& state, std::span<const std::size_t> idx) {
  const std::size_t width = state.train.history() * state.train.features();
  std::vector<double> v;
  v.reserve(idx.size() * width);
  for (std::size_t i : idx) {
    const auto begin = state.train_features.begin() + static_cast<std::ptrdiff_t>(i * width);
    v.insert(v.end(), begin, begin + static_cast<std::ptrdiff_t>(width));
  }
  return Tensor::from({idx.size(), width}, std::move(v));
}

}  // namespace

void LocalLossConfig::validate() const {
  // The open interval is the working range; 1 is admitted as the limit in
  // which all regularizer weights collapse to one.
  if (!(lambda > 0.0 && lambda <= 1.0)) fail(kModule, "lambda must lie in (0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) fail(kModule, "tau must lie in (0, 1]");
  if (subgraph_step == 0) fail(kModule, "subgraph step must be positive");
  if (batch_size == 0) fail(kModule, "batch size must be positive");
}

LocalLoss plain_loss(const Tensor& prediction, const Tensor& truth) {
  LocalLoss out;
  out.total = ops::mse(prediction, truth);
  out.mse = out.total.item();
  return out;
}

LocalLoss local_loss(const Tensor& prediction, const Tensor& truth, const Tensor& prompt,
                     const RegularizerTargets& targets, const LocalLossConfig& config) {
  config.validate();
  LocalLoss out;
  Tensor mse = ops::mse(prediction, truth);
  out.mse = mse.item();
  Tensor total = mse;
  const double inv_l2 = 1.0 / (config.lambda * config.lambda);
  const double inv_t2 = 1.0 / (config.tau * config.tau);
  if (!targets.global.empty()) {
    Tensor term = ops::scale(distance(prompt, targets.global, config.distance), inv_l2);
    out.global_term = term.item();
    total = ops::add(total, term);
  }
  if (!targets.personalized.empty()) {
    Tensor term = ops::scale(distance(prompt, targets.personalized, config.distance), inv_l2);
    out.personalized_term = term.item();
    total = ops::add(total, term);
  }
  if (targets.neighbors.size() <= 1) {
    out.neighbor_skipped = true;
    log_warning(kModule, "neighbor term skipped: " + std::to_string(targets.neighbors.size()) +
                             " neighbor(s) selected");
  } else {
    std::vector<Tensor> parts;
    for (const auto& ref : targets.neighbors) parts.push_back(distance(prompt, ref, config.distance));
    Tensor acc = parts[0];
    for (std::size_t j = 1; j < parts.size(); ++j) acc = ops::add(acc, parts[j]);
    const double norm = 1.0 / static_cast<double>(targets.neighbors.size() - 1);
    Tensor term = ops::scale(acc, inv_t2 * norm);
    out.neighbor_term = term.item();
    total = ops::add(total, term);
  }
  out.constant = 4.0 * (std::log2(config.lambda) + std::log2(config.tau));
  out.total = ops::add_scalar(total, out.constant);
  return out;
}

std::vector<std::size_t> neighbor_select(const std::vector<NeighborCandidate>& participants,
                                         std::size_t self, std::size_t subgraph_step) {
  if (participants.empty()) fail(kModule, "neighbor selection over an empty participant list");
  if (subgraph_step == 0) fail(kModule, "subgraph step must be positive");
  const auto me = std::find_if(participants.begin(), participants.end(),
                               [self](const NeighborCandidate& c) { return c.id == self; });
  if (me == participants.end()) fail(kModule, "client " + std::to_string(self) + " is not a participant");
  std::vector<std::pair<double, std::size_t>> order;
  for (const auto& c : participants) {
    if (c.id == self) continue;
    order.emplace_back(haversine_km(me->geo, c.geo), c.id);
  }
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < order.size(); i += subgraph_step) out.push_back(order[i].second);
  return out;
}

Tensor fm_features(const FoundationModel& fm, const Tensor& inputs) {
  if (inputs.rank() != 3) fail(kModule, "FM features need a [batch x time x width] input");
  Tensor y = fm.forward(inputs);
  return ops::reshape(y, {inputs.dim(0), y.dim(1) * y.dim(2)});
}

LocalUpdateResult local_update(ClientState& state, const FoundationModel& fm,
                               const LocalTrainConfig& config, Rng& rng) {
  config.loss.validate();
  if (state.train.empty()) fail(kModule, "client " + state.name + " has an empty training split");
  LocalUpdateResult result;
  if (config.loss.local_epochs == 0) return result;

  const std::size_t n = state.train.size();
  const std::size_t batch = std::min(config.loss.batch_size, n);
  const ForwardOptions options = eval_options(state);
  std::optional<Optimizer> opt;
  if (state.mode == TuningMode::kHead) ensure_train_features(state, fm);

  for (std::size_t epoch = 0; epoch < config.loss.local_epochs; ++epoch) {
    const auto perm = rng.permutation(n);
    if (state.mode == TuningMode::kPrompts) {
      NoGradGuard guard;
      const Tensor x0 = state.train.input(perm[0]);
      result.temporal = iterate_temporal(x0, state.prompts, fm, options, rng);
      result.variable = iterate_variable(x0, state.prompts, fm, options, rng);
    }
    if (!opt) opt.emplace(config.optimizer, trainable(state, config.train_layers));

    double total = 0.0, mse = 0.0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < n; b += batch, ++steps) {
      const std::vector<std::size_t> order(perm.begin() + b, perm.begin() + std::min(n, b + batch));
      const Tensor truth = state.train.targets(order, state.task);
      Tensor pred;
      if (state.mode == TuningMode::kPrompts) {
        pred = forward_with_prompts(state.train.inputs(order), state.prompts, state.geo, fm,
                                    state.head, options);
      } else {
        pred = state.head.forward(gather_features(state, order));
      }
      LocalLoss loss;
      if (state.mode == TuningMode::kPrompts && state.regularize) {
        loss = local_loss(pred, truth, ops::flatten_concat(state.prompts.tensors()),
                          state.references, config.loss);
      } else {
        loss = plain_loss(pred, truth);
      }
      opt->zero_grad();
      backward(loss.total);
      opt->step();
      total += loss.total.item();
      mse += loss.mse;
    }
    result.epoch_losses.push_back(total / steps);
    result.epoch_mse.push_back(mse / steps);
  }
  return result;
}

Tensor predict(ClientState& state, const FoundationModel& fm, const ForecastWindows& windows,
               std::span<const std::size_t> indices) {
  NoGradGuard guard;
  const std::size_t width = windows.output_width(state.task);
  std::vector<double> out;
  out.reserve(indices.size() * width);
  for (std::size_t b = 0; b < indices.size(); b += kEvalChunk) {
    const auto chunk = indices.subspan(b, std::min(kEvalChunk, indices.size() - b));
    const Tensor x = windows.inputs(chunk);
    const Tensor y = state.mode == TuningMode::kPrompts
                         ? forward_with_prompts(x, state.prompts, state.geo, fm, state.head,
                                                eval_options(state))
                         : state.head.forward(fm_features(fm, x));
    if (y.dim(1) != width) fail(kModule, "head output width does not match the task");
    out.insert(out.end(), y.values().begin(), y.values().end());
  }
  return Tensor::from({indices.size(), width}, std::move(out));
}

Tensor forecast(const ClientState& state, const FoundationModel& fm, const Tensor& window) {
  const std::size_t history = state.train.history();
  const std::size_t features = state.train.features();
  if (window.rank() != 2 || window.dim(1) != features) {
    fail(kModule, "forecast window must be [time x " + std::to_string(features) + "]");
  }
  if (window.dim(0) < history) {
    fail(kModule, "forecast window has " + std::to_string(window.dim(0)) + " rows, needs " +
                      std::to_string(history));
  }
  NoGradGuard guard;
  Tensor x = ops::slice(window, 0, window.dim(0) - history, window.dim(0));
  x = ops::reshape(x, {1, history, features});
  const Tensor y = state.mode == TuningMode::kPrompts
                       ? forward_with_prompts(x, state.prompts, state.geo, fm, state.head,
                                              eval_options(state))
                       : state.head.forward(fm_features(fm, x));
  const std::size_t k = state.task == Task::kUnivariate ? 1 : features;
  return ops::reshape(y, {state.train.horizon(), k});
}

}  // namespace fedwing
