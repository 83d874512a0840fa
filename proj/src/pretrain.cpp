// SPDX-License-Identifier: Apache-2.0
#include "fedwing/pretrain.hpp"

#include <algorithm>

#include "fedwing/error.hpp"
#include "fedwing/ops.hpp"
#include "fedwing/rng.hpp"
#include "fedwing/sampling.hpp"

namespace fedwing {
namespace {

const char* kModule = "transformer-fm";

constexpr std::uint64_t kStreamLocal = 0x5052'4554;  // "PRET"
constexpr std::uint64_t kStreamSample = 0x5341'4d50;
constexpr std::uint64_t kStreamValidation = 0x5641'4c49;

std::size_t window_count(std::size_t rows, std::size_t window) {
  return rows >= window ? rows - window + 1 : 0;
}

// Packs the listed windows of a [rows x features] series into [B x window x features].
Tensor gather_windows(const std::vector<double>& series, std::size_t features, std::size_t window,
                      const std::vector<std::size_t>& starts) {
  std::vector<double> out;
  out.reserve(starts.size() * window * features);
  for (std::size_t s : starts) {
    const auto* begin = series.data() + s * features;
    out.insert(out.end(), begin, begin + window * features);
  }
  return Tensor::from({starts.size(), window, features}, std::move(out));
}

Tensor batch_masks(std::size_t batch, std::size_t window, std::size_t features,
                   const MaskSpec& spec, Rng& rng) {
  std::vector<double> out;
  out.reserve(batch * window * features);
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor m = generate_mask(window, features, spec, rng);
    out.insert(out.end(), m.values().begin(), m.values().end());
  }
  return Tensor::from({batch, window, features}, std::move(out));
}

bool has_masked_cell(const Tensor& mask) {
  const auto v = mask.values();
  return std::any_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

}  // namespace

void MaskSpec::validate() const {
  if (!(rate > 0.0 && rate < 1.0)) fail(kModule, "mask rate must lie in (0, 1)");
  if (!(mean_masked_length >= 1.0)) fail(kModule, "mean masked length must be at least 1");
}

Tensor generate_mask(std::size_t length, std::size_t variables, const MaskSpec& spec, Rng& rng) {
  spec.validate();
  if (length == 0 || variables == 0) fail(kModule, "mask dimensions must be positive");
  const double lm = spec.mean_masked_length;
  const double lu = spec.mean_unmasked_length();
  std::vector<double> mask(length * variables, 1.0);
  for (std::size_t j = 0; j < variables; ++j) {
    bool masked = rng.bernoulli(spec.rate);
    std::size_t t = 0;
    while (t < length) {
      std::size_t run;
      if (masked) {
        run = rng.geometric_trials(1.0 / lm);
      } else if (lu >= 1.0) {
        run = rng.geometric_trials(1.0 / lu);
      } else {
        // Mean below one: unmasked runs may be empty.
        run = rng.geometric_failures(1.0 / (1.0 + lu));
      }
      const std::size_t end = std::min(length, t + run);
      if (masked) {
        for (std::size_t i = t; i < end; ++i) mask[i * variables + j] = 0.0;
      }
      t = end;
      masked = !masked;
    }
  }
  return Tensor::from({length, variables}, std::move(mask));
}

Tensor pretrain_loss(const Tensor& truth, const Tensor& prediction, const Tensor& mask) {
  if (truth.shape() != prediction.shape() || truth.shape() != mask.shape()) {
    fail(kModule, "pretrain_loss: truth, prediction and mask shapes differ");
  }
  std::vector<double> weight(mask.numel());
  std::size_t masked = 0;
  const auto mv = mask.values();
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] = mv[i] == 0.0 ? 1.0 : 0.0;
    masked += mv[i] == 0.0 ? 1 : 0;
  }
  if (masked == 0) fail(kModule, "pretrain_loss: no masked positions");
  const Tensor w = Tensor::from(mask.shape(), std::move(weight));
  const Tensor diff = ops::mul(ops::sub(prediction, truth), w);
  return ops::scale(ops::sum(ops::mul(diff, diff)), 1.0 / static_cast<double>(masked));
}

double pretrain_validation_loss(const FoundationModel& model,
                                const std::vector<PretrainClient>& clients,
                                const PretrainConfig& config) {
  NoGradGuard no_grad;
  double total = 0.0;
  double weight = 0.0;
  for (std::size_t c = 0; c < clients.size(); ++c) {
    const auto& client = clients[c];
    const std::size_t n = window_count(client.validation_rows(), config.window);
    if (n == 0) continue;
    const std::size_t take = std::min(n, config.validation_windows);
    std::vector<std::size_t> starts(take);
    for (std::size_t i = 0; i < take; ++i) starts[i] = i * n / take;
    const Tensor x = gather_windows(client.validation, client.features, config.window, starts);
    Rng rng(derive_seed(config.seed, kStreamValidation, c));
    Tensor mask = batch_masks(take, config.window, client.features, config.mask, rng);
    if (!has_masked_cell(mask)) continue;
    const Tensor pred = model.forward(ops::mul(x, mask));
    total += pretrain_loss(x, pred, mask).item() * static_cast<double>(take);
    weight += static_cast<double>(take);
  }
  if (weight == 0.0) fail(kModule, "no validation windows available");
  return total / weight;
}

PretrainResult federated_pretrain(const std::vector<PretrainClient>& clients,
                                  const FoundationModel& initial, const PretrainConfig& config) {
  if (clients.empty()) fail(kModule, "federated pre-training needs at least one client");
  config.mask.validate();
  const std::size_t features = initial.config().feature_dim;
  for (const auto& c : clients) {
    if (c.features != features) fail(kModule, "client feature count differs from the FM config");
    if (window_count(c.train_rows(), config.window) == 0) {
      fail(kModule, "client pre-training split shorter than one window");
    }
  }
  if (config.window > initial.config().max_length) fail(kModule, "window exceeds positional capacity");

  PretrainResult result{initial.clone(false), {}};
  for (std::size_t round = 1; round <= config.rounds; ++round) {
    Rng sampler(derive_seed(config.seed, kStreamSample, round));
    const auto participants = sample_clients(clients.size(), config.participation, sampler);

    std::vector<FoundationModel> locals;
    std::vector<double> weights;
    double loss_sum = 0.0;
    for (std::size_t id : participants) {
      const auto& client = clients[id];
      Rng rng(derive_seed(config.seed, kStreamLocal, round, id));
      FoundationModel local = result.model.clone(true);
      Optimizer opt(config.optimizer, local.parameter_tensors());
      const std::size_t n = window_count(client.train_rows(), config.window);
      const std::size_t batch = std::min(n, config.batch_size);
      double last = 0.0;
      for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
        auto order = rng.permutation(n);
        order.resize(batch);
        const Tensor x = gather_windows(client.train, features, config.window, order);
        const Tensor mask = batch_masks(batch, config.window, features, config.mask, rng);
        if (!has_masked_cell(mask)) continue;
        ForwardOptions fo;
        fo.train = true;
        fo.rng = &rng;
        const Tensor loss = pretrain_loss(x, local.forward(ops::mul(x, mask), fo), mask);
        opt.zero_grad();
        backward(loss);
        opt.step();
        last = loss.item();
      }
      loss_sum += last;
      weights.push_back(static_cast<double>(n));
      locals.push_back(local.clone(false));
    }
    std::vector<const FoundationModel*> ptrs;
    for (const auto& m : locals) ptrs.push_back(&m);
    result.model = average_models(ptrs, weights);

    PretrainRound r;
    r.round = round;
    r.participants = participants;
    r.train_loss = loss_sum / static_cast<double>(participants.size());
    r.validation_loss = pretrain_validation_loss(result.model, clients, config);
    result.curve.push_back(r);
  }
  return result;
}

}  // namespace fedwing
