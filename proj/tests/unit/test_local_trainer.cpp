// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fedwing/error.hpp"
#include "fedwing/federation.hpp"
#include "fedwing/graph_server.hpp"
#include "fedwing/local_trainer.hpp"
#include "fedwing/ops.hpp"
#include "fedwing/rng.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace fedwing;

namespace {

LocalLossConfig coefficients(double lambda, double tau) {
  LocalLossConfig c;
  c.lambda = lambda;
  c.tau = tau;
  return c;
}

}  // namespace

TEST_CASE("scalar toy local loss evaluates to 9") {
  const Tensor pred = Tensor::from({1, 1}, {1.0});
  const Tensor truth = Tensor::from({1, 1}, {0.0});
  const Tensor prompt = Tensor::from({1, 1}, {1.0}, true);
  const RegularizerTargets refs{{0.0}, {0.0}, {{0.0}, {2.0}}};
  const LocalLoss l = local_loss(pred, truth, prompt, refs, coefficients(0.5, 0.5));
  CHECK(std::abs(l.total.item() - 9.0) < 1e-12);
  CHECK(l.mse == 1.0);
  CHECK(l.global_term == 4.0);
  CHECK(l.personalized_term == 4.0);
  CHECK(l.neighbor_term == 8.0);
  CHECK(l.constant == -8.0);
  CHECK_FALSE(l.neighbor_skipped);
}

TEST_CASE("unit coefficients with coincident references reduce to MSE") {
  Rng rng(1);
  const Tensor pred = Tensor::randn({3, 4}, 1.0, rng), truth = Tensor::randn({3, 4}, 1.0, rng);
  const Tensor prompt = Tensor::randn({1, 6}, 1.0, rng, true);
  const std::vector<double> p(prompt.values().begin(), prompt.values().end());
  const LocalLoss l = local_loss(pred, truth, prompt, {p, p, {}}, coefficients(1.0, 1.0));
  CHECK(l.total.item() == doctest::Approx(ops::mse(pred, truth).item()).epsilon(1e-15));
  CHECK(l.constant == 0.0);
  CHECK(l.neighbor_skipped);
  CHECK_THROWS_AS(coefficients(0.0, 0.5).validate(), Error);
  CHECK_THROWS_AS(coefficients(0.5, 1.5).validate(), Error);
}

TEST_CASE("the constant term carries no gradient") {
  Rng rng(2);
  Tensor prompt = Tensor::randn({1, 5}, 1.0, rng, true);
  const std::vector<double> g0 = {0.1, 0.2, 0.3, 0.4, 0.5};
  const std::vector<std::vector<double>> nb = {{1, 1, 1, 1, 1}, {0, 0, 0, 0, 0}, {-1, 2, 0, 1, 0}};
  const Tensor pred = Tensor::zeros({1, 1}), truth = Tensor::zeros({1, 1});
  const LocalLoss l = local_loss(pred, truth, prompt, {g0, g0, nb}, coefficients(0.7, 0.3));
  backward(l.total);
  const auto with_constant = prompt.grad();
  prompt.zero_grad();

  // Same objective written out without the constant.
  auto ref = [&](const std::vector<double>& v) { return Tensor::from({1, 5}, v); };
  Tensor manual = ops::scale(ops::add(ops::squared_distance(prompt, ref(g0)), ops::squared_distance(prompt, ref(g0))),
                             1.0 / 0.49);
  Tensor nsum = ops::squared_distance(prompt, ref(nb[0]));
  for (std::size_t j = 1; j < nb.size(); ++j) nsum = ops::add(nsum, ops::squared_distance(prompt, ref(nb[j])));
  manual = ops::add(manual, ops::scale(nsum, 1.0 / (0.09 * 2.0)));
  backward(manual);
  const auto without = prompt.grad();
  for (std::size_t i = 0; i < 5; ++i) CHECK(with_constant[i] == doctest::Approx(without[i]).epsilon(1e-12));
  CHECK(l.total.item() == doctest::Approx(manual.item() + 4.0 * (std::log2(0.7) + std::log2(0.3))).epsilon(1e-12));
}

TEST_CASE("local loss gradient matches finite differences") {
  Rng rng(3);
  Tensor pred = Tensor::randn({2, 3}, 1.0, rng, true);
  Tensor prompt = Tensor::randn({1, 4}, 1.0, rng, true);
  const Tensor truth = Tensor::randn({2, 3}, 1.0, rng);
  const RegularizerTargets refs{{0, 1, 0, 1}, {1, 0, 1, 0}, {{0, 0, 0, 0}, {1, 2, 3, 4}, {-1, 0, 1, 0}}};
  std::vector<Tensor> leaves{pred, prompt};
  for (auto kind : {PromptDistance::kSquaredEuclidean, PromptDistance::kCosine}) {
    LocalLossConfig c = coefficients(0.7, 0.3);
    c.distance = kind;
    CHECK(oracle::gradient_check(leaves, [&] { return local_loss(pred, truth, prompt, refs, c).total; }) < 1e-6);
  }
}

TEST_CASE("a descent step on the neighbor term moves toward the neighbors") {
  Rng rng(4);
  Tensor prompt = Tensor::randn({1, 6}, 1.0, rng, true);
  RegularizerTargets refs;
  for (int j = 0; j < 3; ++j) {
    std::vector<double> v(6);
    for (auto& x : v) x = rng.normal();
    refs.neighbors.push_back(v);
  }
  auto spread = [&](std::span<const double> p) {
    double s = 0.0;
    for (const auto& n : refs.neighbors)
      for (std::size_t i = 0; i < 6; ++i) s += (p[i] - n[i]) * (p[i] - n[i]);
    return s;
  };
  const double before = spread(prompt.values());
  const Tensor zero = Tensor::zeros({1, 1});
  backward(local_loss(zero, zero, prompt, refs, coefficients(0.7, 0.3)).total);
  Optimizer opt(OptimizerConfig::gradient_descent(0.01), {prompt});
  opt.step();
  CHECK(spread(prompt.values()) < before);
}

TEST_CASE("neighbor selection strides") {
  // Participants on a meridian: distance order equals latitude order.
  auto line = [](std::size_t count) {
    std::vector<NeighborCandidate> c;
    for (std::size_t i = 0; i < count; ++i) c.push_back({i * 10, {double(i), 0.0}});
    return c;
  };
  CHECK(neighbor_select(line(5), 0, 1) == std::vector<std::size_t>{10, 20, 30, 40});
  CHECK(neighbor_select(line(5), 0, 5).size() <= 1);
  CHECK(neighbor_select(line(8), 0, 2) == std::vector<std::size_t>{10, 30, 50, 70});
  // From the middle: ranks by distance, ties (co-located stations) broken by id.
  const std::vector<NeighborCandidate> mid = {{30, {3.0, 0.0}}, {0, {0.0, 0.0}}, {20, {2.0, 0.0}},
                                              {10, {3.0, 0.0}}, {40, {2.5, 0.0}}};
  CHECK(neighbor_select(mid, 20, 1) == std::vector<std::size_t>{40, 10, 30, 0});
  CHECK(neighbor_select(mid, 20, 2) == std::vector<std::size_t>{40, 30});
  CHECK_THROWS_AS(neighbor_select(line(3), 99, 1), Error);
  CHECK_THROWS_AS(neighbor_select(line(3), 0, 0), Error);
}

TEST_CASE("local update") {
  const auto data = fixture::small_data(2);
  const FoundationModel fm = fixture::small_model();
  FederationConfig cfg = fixture::quick_config(FederationMode::kFedAvgPrompts);
  auto clients = make_clients(data, fm, cfg);
  ClientState& c = clients[0];

  SUBCASE("zero epochs leave prompts unchanged") {
    LocalTrainConfig lc = cfg.local();
    lc.loss.local_epochs = 0;
    const auto before = c.prompts.flatten();
    Rng rng(1);
    CHECK(local_update(c, fm, lc, rng).epoch_losses.empty());
    CHECK(c.prompts.flatten() == before);
  }

  SUBCASE("training loss trends down without regularizers") {
    std::vector<double> drops;
    for (std::uint64_t seed : {1, 2, 3}) {
      auto fresh = make_clients(data, fm, cfg);
      LocalTrainConfig lc = cfg.local();
      lc.loss.local_epochs = 5;
      Rng rng(seed);
      const auto r = local_update(fresh[0], fm, lc, rng);
      REQUIRE(r.epoch_losses.size() == 5);
      drops.push_back(r.epoch_losses.front() - r.epoch_losses.back());
      CHECK(r.temporal.steps == cfg.history);
      CHECK(r.variable.steps == 4);
    }
    std::sort(drops.begin(), drops.end());
    CHECK(drops[1] > 0.0);
  }

  SUBCASE("forecast shapes") {
    Rng rng(2);
    const Tensor window = Tensor::randn({20, 4}, 1.0, rng);
    CHECK(forecast(c, fm, window).shape() == Shape{12, 4});
    auto uni_cfg = cfg;
    uni_cfg.task = Task::kUnivariate;
    auto uni = make_clients(data, fm, uni_cfg);
    CHECK(forecast(uni[0], fm, window).shape() == Shape{12, 1});
    CHECK_THROWS_AS(forecast(c, fm, Tensor::randn({5, 4}, 1.0, rng)), Error);
  }

  SUBCASE("the frozen model is untouched by training") {
    const FoundationModel copy = fm.clone(false);
    LocalTrainConfig lc = cfg.local();
    lc.train_layers = true;
    Rng rng(3);
    local_update(c, fm, lc, rng);
    CHECK(fm == copy);
  }
}

TEST_CASE("forecast shapes for twelve variables") {
  const auto data = fixture::small_data(2, 400, 12);
  const FoundationModel fm = fixture::small_model(12);
  FederationConfig cfg = fixture::quick_config(FederationMode::kFedWing);
  auto multi = make_clients(data, fm, cfg);
  Rng rng(5);
  const Tensor window = Tensor::randn({12, 12}, 1.0, rng);
  CHECK(forecast(multi[0], fm, window).shape() == Shape{12, 12});
  cfg.task = Task::kUnivariate;
  auto uni = make_clients(data, fm, cfg);
  CHECK(forecast(uni[0], fm, window).shape() == Shape{12, 1});
}

TEST_CASE("a converged model on a constant series predicts a constant") {
  // Zero head weights with a learned bias only: every input maps to the bias.
  const auto data = fixture::small_data(1);
  const FoundationModel fm = fixture::small_model();
  auto clients = make_clients(data, fm, fixture::quick_config(FederationMode::kFedAvgPrompts));
  ClientState& c = clients[0];
  auto params = c.head.parameters();
  for (auto& x : params.back().mutable_values()) x = 0.25;
  Rng rng(6);
  const Tensor a = forecast(c, fm, Tensor::randn({12, 4}, 1.0, rng));
  const Tensor b = forecast(c, fm, Tensor::full({12, 4}, 3.0));
  for (std::size_t i = 0; i < a.numel(); ++i) {
    CHECK(a.at(i) == 0.25);
    CHECK(b.at(i) == 0.25);
  }
}
