// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "fedwing/error.hpp"
#include "fedwing/federation.hpp"
#include "fedwing/rng.hpp"
#include "fedwing/sampling.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace fedwing;

TEST_CASE("participant sampling") {
  CHECK(participant_count(10, 1.0) == 10);
  CHECK(participant_count(10, 0.3) == 3);
  CHECK(participant_count(12, 0.3) == 4);
  CHECK(participant_count(5, 0.01) == 1);
  Rng rng(1);
  CHECK(sample_clients(7, 1.0, rng) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(sample_clients(7, 0.0, rng), Error);
  CHECK_THROWS_AS(sample_clients(7, 1.5, rng), Error);

  std::vector<double> hits(10, 0.0);
  const int rounds = 10000;
  for (int r = 0; r < rounds; ++r) {
    const auto s = sample_clients(10, 0.3, rng);
    REQUIRE(s.size() == 3);
    CHECK(std::is_sorted(s.begin(), s.end()));
    for (auto id : s) hits[id] += 1.0;
  }
  for (double h : hits) CHECK(std::abs(h / rounds - 0.3) < 0.02);
}

TEST_CASE("differential privacy noise") {
  Rng rng(2);
  const auto clean = AdaptivePromptSet::initialize({12, 4, 1, 1}, rng);
  auto same = clean.clone();
  Rng r0(3);
  add_dp_noise(same, 0.0, r0);
  CHECK(same.flatten() == clean.flatten());

  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  Rng noise(4);
  while (count < 100000) {
    auto noisy = clean.clone();
    add_dp_noise(noisy, 0.01, noise);
    CHECK(noisy.temporal_weight.at(0) == clean.temporal_weight.at(0));
    CHECK(noisy.variable_weight.at(0) == clean.variable_weight.at(0));
    for (auto [a, b] : {std::pair{noisy.temporal, clean.temporal}, {noisy.variable, clean.variable},
                        {noisy.spatial, clean.spatial}}) {
      for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = a.at(i) - b.at(i);
        sum += d;
        sq += d * d;
        ++count;
      }
    }
  }
  const double mean = sum / count;
  const double sd = std::sqrt(sq / count - mean * mean);
  CHECK(sd >= 0.008);
  CHECK(sd <= 0.012);
  CHECK_THROWS_AS(add_dp_noise(same, -1.0, r0), Error);
}

TEST_CASE("error metrics") {
  const std::vector<double> y = {1, 2, 3};
  auto m = error_metrics(y, y);
  CHECK(m.mae == 0.0);
  CHECK(m.rmse == 0.0);
  m = error_metrics(std::vector<double>{1, 1}, std::vector<double>{0, 0});
  CHECK(m.mae == 1.0);
  CHECK(m.rmse == 1.0);
  m = error_metrics(std::vector<double>{2, 4, 3}, y);
  CHECK(m.mae == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m.rmse == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
  CHECK_THROWS_AS(error_metrics(std::vector<double>{1}, y), Error);
}

TEST_CASE("mode names and presets") {
  for (auto m : {FederationMode::kFedAvgHead, FederationMode::kFedAvgPrompts, FederationMode::kFedWing})
    CHECK(parse_mode(mode_name(m)) == m);
  CHECK(parse_task("task1") == Task::kUnivariate);
  CHECK(parse_task("multivariate") == Task::kMultivariate);
  CHECK_THROWS_AS(parse_mode("fedprox"), Error);
  const auto main = FederationConfig::main_preset();
  CHECK(main.rounds == 50);
  CHECK(main.local_epochs == 25);
  CHECK(main.participation == 0.3);
  CHECK(main.lambda == 0.7);
  CHECK(main.tau == 0.3);
  CHECK(main.alpha == 0.99);
  const auto t1 = FederationConfig::table1_preset();
  CHECK(t1.rounds == 30);
  CHECK(t1.local_epochs == 5);
  FederationConfig bad = main;
  bad.participation = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("prompt uploads are smaller than head uploads") {
  const FoundationModel fm = fixture::small_model();
  for (auto task : {Task::kUnivariate, Task::kMultivariate}) {
    FederationConfig c = FederationConfig::table1_preset();
    c.task = task;
    c.mode = FederationMode::kFedWing;
    const std::size_t prompts = upload_parameter_count(c, fm, 4);
    c.mode = FederationMode::kFedAvgHead;
    const std::size_t head = upload_parameter_count(c, fm, 4);
    CHECK(prompts < head);
  }
  FederationConfig c = FederationConfig::table1_preset();
  c.share_layers = false;
  CHECK(upload_parameter_count(c, fm, 4) == 4 * 12 * 4 + 4);
}

TEST_CASE("server prompts equal the weighted mean of uploads") {
  const auto data = fixture::small_data();
  const FoundationModel fm = fixture::small_model();
  for (auto mode : {FederationMode::kFedAvgPrompts, FederationMode::kFedWing}) {
    FederationConfig c = fixture::quick_config(mode);
    c.graph = false;
    c.regularize = false;
    std::size_t seen = 0;
    run_federation(c, data, fm, [&](const RoundObservation& o) {
      ++seen;
      REQUIRE(o.uploads.size() == o.participants.size());
      for (std::size_t k = 0; k < o.global_prompts.size(); ++k) {
        std::vector<double> col;
        for (const auto& u : o.uploads) col.push_back(u[k]);
        CHECK(std::abs(o.global_prompts[k] - oracle::weighted_mean(col, o.counts)) < 1e-12);
      }
      if (mode == FederationMode::kFedWing) {
        for (const auto& p : o.personalized) CHECK(p == o.global_prompts);
      }
    });
    CHECK(seen == c.rounds);
  }
}

TEST_CASE("prompt uploads carry exactly the five prompt arrays") {
  const auto data = fixture::small_data();
  const FoundationModel fm = fixture::small_model();
  FederationConfig c = fixture::quick_config(FederationMode::kFedWing);
  c.rounds = 1;
  run_federation(c, data, fm, [&](const RoundObservation& o) {
    for (const auto& u : o.uploads) CHECK(u.size() == 4 * 12 * 4 + 4);
    CHECK(o.personalized.size() == o.participants.size());
  });
}

TEST_CASE("federation runs are deterministic and keep the FM frozen") {
  const auto data = fixture::small_data();
  const FoundationModel fm = fixture::small_model();
  const FoundationModel copy = fm.clone(false);
  FederationConfig c = fixture::quick_config(FederationMode::kFedWing);
  c.dp = true;
  c.record_graphs = true;
  const FederationResult a = run_federation(c, data, fm);
  const FederationResult b = run_federation(c, data, fm);
  CHECK(metrics_json(a.metrics) == metrics_json(b.metrics));
  CHECK(fm == copy);
  CHECK(a.rounds.size() == c.rounds);
  CHECK(a.metrics.global.has_value());
  CHECK(a.metrics.clients.size() == data.size());
  CHECK(a.metrics.upload_parameters < upload_parameter_count(
                                          [&] {
                                            auto h = c;
                                            h.mode = FederationMode::kFedAvgHead;
                                            return h;
                                          }(),
                                          fm, 4));

  const auto graphs = nlohmann::json::parse(graph_dump_json(a.rounds));
  CHECK(graphs["schema"] == "fedwing.graphs/1");
  REQUIRE(graphs["rounds"].size() == c.rounds);
  const auto& m = graphs["rounds"][0]["matrices"];
  CHECK(m.size() == 5);
  const std::size_t n = a.rounds[0].participants.size();
  for (const auto& [name, rows] : m.items()) {
    CHECK(rows.size() == n);
    CHECK(rows[0].size() == n);
  }
}

TEST_CASE("dp factor zero is bit-identical to no noise") {
  const auto data = fixture::small_data();
  const FoundationModel fm = fixture::small_model();
  FederationConfig c = fixture::quick_config(FederationMode::kFedWing);
  const auto plain = run_federation(c, data, fm);
  c.dp = true;
  c.dp_factor = 0.0;
  const auto zero = run_federation(c, data, fm);
  CHECK(metrics_json(plain.metrics) == metrics_json(zero.metrics));
  CHECK(plain.checkpoint.global_prompts == zero.checkpoint.global_prompts);
}

TEST_CASE("head mode shares only the head") {
  const auto data = fixture::small_data();
  const FoundationModel fm = fixture::small_model();
  FederationConfig c = fixture::quick_config(FederationMode::kFedAvgHead);
  c.dp = true;  // prompts are not exchanged, so noise has nothing to act on
  const auto r = run_federation(c, data, fm);
  CHECK(r.checkpoint.global_prompts.empty());
  CHECK_FALSE(r.checkpoint.global_head.empty());
  for (const auto& cl : r.checkpoint.clients) CHECK(cl.head == r.checkpoint.global_head);
  CHECK_FALSE(r.metrics.global.has_value());
  c.dp = false;
  CHECK(metrics_json(run_federation(c, data, fm).metrics) == metrics_json(r.metrics));
}

TEST_CASE("single client with full participation") {
  const auto data = fixture::small_data(1);
  const FoundationModel fm = fixture::small_model();
  FederationConfig c = fixture::quick_config(FederationMode::kFedWing);
  c.participation = 1.0;
  const auto r = run_federation(c, data, fm);
  for (const auto& log : r.rounds) CHECK(log.participants == std::vector<std::size_t>{0});
  // The server mean of one upload is that upload.
  CHECK(r.checkpoint.global_prompts == r.checkpoint.clients[0].prompts);
}

TEST_CASE("checkpoint evaluation reproduces the run metrics") {
  const auto data = fixture::small_data();
  const FoundationModel fm = fixture::small_model();
  for (auto mode : {FederationMode::kFedAvgHead, FederationMode::kFedAvgPrompts, FederationMode::kFedWing}) {
    FederationConfig c = fixture::quick_config(mode);
    const auto r = run_federation(c, data, fm);
    const auto dir = std::filesystem::temp_directory_path() / "fedwing_unit_ckpt";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "rounds.json").string();
    write_text(path, round_log_json(r.rounds, r.checkpoint, c));
    const Checkpoint ck = read_checkpoint(path);
    const FederationConfig back = read_run_config_from_log(path);
    CHECK(back.mode == mode);
    CHECK(back.rounds == c.rounds);
    const auto report = evaluate_checkpoint(ck, data, fm, back);
    CHECK(metrics_json(report) == metrics_json(r.metrics));
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("metrics report in both unit systems") {
  const auto data = fixture::small_data();
  const FoundationModel fm = fixture::small_model();
  const auto r = run_federation(fixture::quick_config(FederationMode::kFedAvgPrompts), data, fm);
  const auto j = nlohmann::json::parse(metrics_json(r.metrics));
  CHECK(j["schema"] == "fedwing.metrics/1");
  for (const char* unit : {"normalized", "physical"})
    for (const char* k : {"mae", "rmse"}) CHECK(j["aggregate"][unit][k].is_number());
  // Physical errors are the normalized ones scaled by the per-variable spread.
  CHECK(r.metrics.aggregate.physical.mae != r.metrics.aggregate.normalized.mae);
}
