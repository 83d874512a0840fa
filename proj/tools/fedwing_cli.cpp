// SPDX-License-Identifier: Apache-2.0
//
// fedwing: synth | pretrain | federate | evaluate | inspect-graph
//
// Settings are resolved as defaults < command-line flags < --config file.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedwing/data_io.hpp"
#include "fedwing/error.hpp"
#include "fedwing/federation.hpp"
#include "fedwing/fm.hpp"
#include "fedwing/logging.hpp"
#include "fedwing/pretrain.hpp"
#include "fedwing/rng.hpp"
#include "fedwing/run_config.hpp"

namespace fs = std::filesystem;
using namespace fedwing;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run configuration (overrides flags)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--preset", c.preset, "main | table1");
  cmd->add_option("--seed", c.seed, "base seed for every random stream");
  cmd->add_flag("-v,--verbose", c.verbose, "log progress to stderr");
}

/// Preset, then flags (via `apply_flags`), then the config file.
template <class F>
RunConfig resolve(const Common& c, F&& apply_flags) {
  std::string text;
  std::string preset = c.preset.value_or("main");
  if (!c.config_path.empty()) {
    text = read_text(c.config_path);
    const std::string from_file = config_preset(text, c.config_path);
    if (!from_file.empty()) preset = from_file;
  }
  RunConfig cfg = preset_config(preset);
  apply_flags(cfg);
  if (!text.empty()) apply_config_json(cfg, text, c.config_path);
  return cfg;
}

void print_metrics(const MetricsReport& m) {
  std::printf("mode %s, task %s, %zu clients\n", m.mode.c_str(), task_name(m.task).c_str(),
              m.clients.size());
  std::printf("%-10s %8s %12s %12s %14s %14s\n", "client", "windows", "MAE", "RMSE", "MAE(phys)",
              "RMSE(phys)");
  auto row = [](const SeriesMetrics& s) {
    std::printf("%-10s %8zu %12.6f %12.6f %14.6f %14.6f\n", s.client.c_str(), s.windows,
                s.normalized.mae, s.normalized.rmse, s.physical.mae, s.physical.rmse);
  };
  for (const auto& c : m.clients) row(c);
  row(m.aggregate);
  if (m.global) row(*m.global);
  std::printf("uploaded parameters per client per round: %zu (%zu participants)\n",
              m.upload_parameters, m.participants_per_round);
}

std::vector<ClientData> load_data(const RunConfig& cfg) {
  if (cfg.manifest.empty()) fail("cli", "no dataset manifest given (--manifest)");
  if (!fs::exists(cfg.manifest)) fail("data-io", "manifest " + cfg.manifest + " does not exist");
  return prepare_data(load_manifest(cfg.manifest), cfg.split);
}

FoundationModel load_fm(const RunConfig& cfg, std::size_t features) {
  if (cfg.snapshot.empty()) fail("cli", "no FM snapshot given (--snapshot)");
  if (!fs::exists(cfg.snapshot)) fail("transformer-fm", "snapshot " + cfg.snapshot + " does not exist");
  FoundationModel fm = FoundationModel::load(cfg.snapshot);
  if (fm.config().feature_dim != features) {
    fail("transformer-fm", "snapshot was trained for " + std::to_string(fm.config().feature_dim) +
                               " variables, dataset has " + std::to_string(features));
  }
  return fm.clone(false);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated adaptive-prompt tuning of a frozen forecasting foundation model"};
  app.require_subcommand(1);

  // synth
  Common synth_common;
  std::optional<std::size_t> stations, hours, variables;
  std::string synth_out = "data";
  auto* synth = app.add_subcommand("synth", "write a synthetic spatially correlated dataset");
  add_common(synth, synth_common);
  synth->add_option("--stations", stations, "station count")->check(CLI::PositiveNumber);
  synth->add_option("--hours", hours, "hourly rows per station")->check(CLI::Range(2, 1 << 24));
  synth->add_option("--variables", variables, "variables per station")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "output directory");

  // pretrain
  Common pre_common;
  std::string pre_manifest, pre_out;
  std::optional<std::size_t> pre_rounds, pre_epochs;
  std::optional<double> pre_participation;
  auto* pretrain = app.add_subcommand("pretrain", "federated masked-reconstruction pre-training");
  add_common(pretrain, pre_common);
  pretrain->add_option("--manifest", pre_manifest, "dataset manifest");
  pretrain->add_option("--out", pre_out, "snapshot path (default <manifest dir>/fm.snapshot)");
  pretrain->add_option("--rounds", pre_rounds, "communication rounds")->check(CLI::PositiveNumber);
  pretrain->add_option("--epochs", pre_epochs, "local epochs per round")->check(CLI::NonNegativeNumber);
  pretrain->add_option("--participation", pre_participation, "client fraction C")
      ->check(CLI::Range(1e-9, 1.0));

  // federate
  Common fed_common;
  std::string fed_manifest, fed_snapshot, fed_out;
  std::optional<std::string> mode, task;
  std::optional<std::size_t> fed_rounds, fed_epochs;
  std::optional<double> fed_participation, dp_factor, fed_sparsity;
  bool dp = false, no_graph = false, no_regularize = false, record_graphs = false;
  auto* federate = app.add_subcommand("federate", "run federated prompt tuning");
  add_common(federate, fed_common);
  federate->add_option("--manifest", fed_manifest, "dataset manifest");
  federate->add_option("--snapshot", fed_snapshot, "FM snapshot from `pretrain`");
  federate->add_option("--out", fed_out, "run directory for metrics.json / rounds.json");
  federate->add_option("--mode", mode, "fedavg-head | fedavg-prompts | fedwing");
  federate->add_option("--task", task, "univariate | multivariate");
  federate->add_option("--rounds", fed_rounds, "communication rounds")->check(CLI::PositiveNumber);
  federate->add_option("--epochs", fed_epochs, "local epochs per round")->check(CLI::NonNegativeNumber);
  federate->add_option("--participation", fed_participation, "client fraction C")
      ->check(CLI::Range(1e-9, 1.0));
  federate->add_flag("--dp", dp, "add Gaussian noise to uploaded prompts");
  federate->add_option("--dp-factor", dp_factor, "noise scale")->check(CLI::NonNegativeNumber);
  federate->add_flag("--no-graph", no_graph, "server mixes by plain weighted mean");
  federate->add_flag("--no-regularize", no_regularize, "plain MSE local objective");
  federate->add_option("--sparsity", fed_sparsity, "graph sparsity weight")->check(CLI::NonNegativeNumber);
  federate->add_flag("--record-graphs", record_graphs, "write graphs.json with every round's matrices");

  // evaluate
  Common eval_common;
  std::string eval_manifest, eval_snapshot, eval_run, eval_out;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "recompute test metrics from a run checkpoint");
  add_common(evaluate_cmd, eval_common);
  evaluate_cmd->add_option("--manifest", eval_manifest, "dataset manifest");
  evaluate_cmd->add_option("--snapshot", eval_snapshot, "FM snapshot");
  evaluate_cmd->add_option("--run", eval_run, "run directory written by `federate`")->required();
  evaluate_cmd->add_option("--out", eval_out, "write the recomputed metrics JSON here");

  // inspect-graph
  std::string graph_run;
  std::optional<std::size_t> graph_round;
  auto* inspect = app.add_subcommand("inspect-graph", "print recorded adjacency matrices");
  inspect->add_option("--run", graph_run, "run directory written by `federate --record-graphs`")
      ->required();
  inspect->add_option("--round", graph_round, "only this round");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*synth) {
      set_log_level(synth_common.verbose ? LogLevel::kInfo : LogLevel::kWarning);
      RunConfig cfg = resolve(synth_common, [&](RunConfig& c) {
        if (stations) c.synth.stations = *stations;
        if (hours) c.synth.hours = *hours;
        if (variables) c.synth.variables = *variables;
        if (synth_common.seed) c.synth.seed = *synth_common.seed;
        c.output = synth_out;
      });
      const std::string manifest = write_dataset(cfg.output, synth_generate(cfg.synth));
      std::printf("%s\n", manifest.c_str());
      return 0;
    }

    if (*pretrain) {
      set_log_level(pre_common.verbose ? LogLevel::kInfo : LogLevel::kWarning);
      RunConfig cfg = resolve(pre_common, [&](RunConfig& c) {
        c.manifest = pre_manifest;
        if (pre_rounds) c.pretrain.rounds = *pre_rounds;
        if (pre_epochs) c.pretrain.local_epochs = *pre_epochs;
        if (pre_participation) c.pretrain.participation = *pre_participation;
        if (pre_common.seed) c.pretrain.seed = *pre_common.seed;
        c.snapshot = pre_out;
      });
      const auto data = load_data(cfg);
      if (cfg.snapshot.empty()) cfg.snapshot = (fs::path(cfg.manifest).parent_path() / "fm.snapshot").string();
      FMConfig fmc = cfg.fm;
      fmc.feature_dim = data[0].features;
      Rng rng(derive_seed(cfg.pretrain.seed, 0xF0));
      const FoundationModel initial = FoundationModel::initialize(fmc, rng);
      const PretrainResult result = federated_pretrain(pretrain_clients(data), initial, cfg.pretrain);
      result.model.save(cfg.snapshot);
      write_text(cfg.snapshot + ".curve.json", pretrain_curve_json(result));
      for (const auto& r : result.curve) {
        std::printf("round %zu  train %.6f  validation %.6f\n", r.round, r.train_loss,
                    r.validation_loss);
      }
      std::printf("%s\n", cfg.snapshot.c_str());
      return 0;
    }

    if (*federate) {
      set_log_level(fed_common.verbose ? LogLevel::kInfo : LogLevel::kWarning);
      RunConfig cfg = resolve(fed_common, [&](RunConfig& c) {
        c.manifest = fed_manifest;
        c.snapshot = fed_snapshot;
        if (!fed_out.empty()) c.output = fed_out;
        auto& f = c.federation;
        if (mode) f.mode = parse_mode(*mode);
        if (task) f.task = parse_task(*task);
        if (fed_rounds) f.rounds = *fed_rounds;
        if (fed_epochs) f.local_epochs = *fed_epochs;
        if (fed_participation) f.participation = *fed_participation;
        if (dp) f.dp = true;
        if (dp_factor) f.dp_factor = *dp_factor;
        if (no_graph) f.graph = false;
        if (no_regularize) f.regularize = false;
        if (fed_sparsity) f.sparsity = *fed_sparsity;
        if (record_graphs) f.record_graphs = true;
        if (fed_common.seed) f.seed = *fed_common.seed;
      });
      const auto data = load_data(cfg);
      const FoundationModel fm = load_fm(cfg, data[0].features);
      const FederationResult result = run_federation(cfg.federation, data, fm);
      fs::create_directories(cfg.output);
      const fs::path out(cfg.output);
      write_text((out / "metrics.json").string(), metrics_json(result.metrics));
      write_text((out / "rounds.json").string(),
                 round_log_json(result.rounds, result.checkpoint, cfg.federation));
      if (cfg.federation.record_graphs) {
        write_text((out / "graphs.json").string(), graph_dump_json(result.rounds));
      }
      print_metrics(result.metrics);
      return 0;
    }

    if (*evaluate_cmd) {
      set_log_level(eval_common.verbose ? LogLevel::kInfo : LogLevel::kWarning);
      const fs::path run(eval_run);
      const std::string log_path = (run / "rounds.json").string();
      if (!fs::exists(log_path)) fail("cli", "missing run artifact " + log_path);
      RunConfig cfg = resolve(eval_common, [&](RunConfig& c) {
        c.manifest = eval_manifest;
        c.snapshot = eval_snapshot;
        c.federation = read_run_config_from_log(log_path);
      });
      const auto data = load_data(cfg);
      const FoundationModel fm = load_fm(cfg, data[0].features);
      const MetricsReport report = evaluate_checkpoint(read_checkpoint(log_path), data, fm, cfg.federation);
      if (!eval_out.empty()) write_text(eval_out, metrics_json(report));
      print_metrics(report);
      return 0;
    }

    if (*inspect) {
      const std::string path = (fs::path(graph_run) / "graphs.json").string();
      if (!fs::exists(path)) fail("cli", "missing graph dump " + path + " (run federate --record-graphs)");
      const auto j = nlohmann::json::parse(read_text(path));
      for (const auto& r : j.at("rounds")) {
        const auto round = r.at("round").get<std::size_t>();
        if (graph_round && *graph_round != round) continue;
        std::printf("round %zu participants", round);
        for (const auto& p : r.at("participants")) std::printf(" %zu", p.get<std::size_t>());
        std::printf("\n");
        for (const auto& [name, m] : r.at("matrices").items()) {
          std::printf("%s\n", name.c_str());
          for (const auto& row : m) {
            for (const auto& x : row) std::printf(" %.17g", x.get<double>());
            std::printf("\n");
          }
        }
      }
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "fedwing: error in %s: %s\n", e.module().c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fedwing: error: %s\n", e.what());
    return 3;
  }
  return 1;
}
