// SPDX-License-Identifier: Apache-2.0
#include "fedwing/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "fedwing/error.hpp"
#include "fedwing/logging.hpp"
#include "fedwing/ops.hpp"
#include "fedwing/rng.hpp"
#include "fedwing/sampling.hpp"

namespace fedwing {
namespace {

const char* kModule = "federation-harness";

// Stream identifiers for derive_seed.
enum Stream : std::uint64_t {
  kSampling = 1,
  kLocal = 2,
  kNoise = 3,
  kGraph = 4,
  kPromptInit = 5,
  kHeadInit = 6,
};

std::size_t layer_numel(const ParameterOverrides& layers) {
  std::size_t n = 0;
  for (const auto& [name, t] : layers) n += t.numel();
  return n;
}

ParameterOverrides copy_layers(const ParameterOverrides& layers) {
  ParameterOverrides out;
  for (const auto& [name, t] : layers) out[name] = t.detach(true);
  return out;
}

ParameterOverrides average_layers(const std::vector<ParameterOverrides>& uploads,
                                  const std::vector<double>& counts) {
  ParameterOverrides out;
  if (uploads.empty()) return out;
  for (const auto& [name, t] : uploads[0]) {
    std::vector<std::vector<double>> rows;
    for (const auto& u : uploads) {
      const auto it = u.find(name);
      if (it == u.end()) fail(kModule, "layer '" + name + "' missing from an upload");
      rows.emplace_back(it->second.values().begin(), it->second.values().end());
    }
    out[name] = Tensor::from(t.shape(), aggregate_global(rows, counts), true);
  }
  return out;
}

std::map<std::string, std::vector<double>> layer_values(const ParameterOverrides& layers) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, t] : layers) out[name] = {t.values().begin(), t.values().end()};
  return out;
}

ParameterOverrides layers_from_values(const std::map<std::string, std::vector<double>>& values,
                                      const FoundationModel& fm) {
  ParameterOverrides out;
  for (const auto& [name, v] : values) {
    const Shape& shape = fm.parameter(name).shape();
    if (shape_numel(shape) != v.size()) fail(kModule, "checkpoint layer '" + name + "' has the wrong size");
    out[name] = Tensor::from(shape, v, true);
  }
  return out;
}

SeriesMetrics series_metrics(const std::string& name, const std::vector<double>& pred,
                             const std::vector<double>& truth, const std::vector<double>& pred_phys,
                             const std::vector<double>& truth_phys, std::size_t windows) {
  SeriesMetrics m;
  m.client = name;
  m.windows = windows;
  m.normalized = error_metrics(pred, truth);
  m.physical = error_metrics(pred_phys, truth_phys);
  return m;
}

}  // namespace

std::string mode_name(FederationMode mode) {
  switch (mode) {
    case FederationMode::kFedAvgHead: return "fedavg-head";
    case FederationMode::kFedAvgPrompts: return "fedavg-prompts";
    case FederationMode::kFedWing: return "fedwing";
  }
  return "";
}

FederationMode parse_mode(const std::string& text) {
  if (text == "fedavg-head") return FederationMode::kFedAvgHead;
  if (text == "fedavg-prompts") return FederationMode::kFedAvgPrompts;
  if (text == "fedwing") return FederationMode::kFedWing;
  fail(kModule, "unknown mode '" + text + "' (expected fedavg-head, fedavg-prompts or fedwing)");
}

std::string task_name(Task task) { return task == Task::kUnivariate ? "univariate" : "multivariate"; }

Task parse_task(const std::string& text) {
  if (text == "univariate" || text == "task1") return Task::kUnivariate;
  if (text == "multivariate" || text == "task2") return Task::kMultivariate;
  fail(kModule, "unknown task '" + text + "' (expected univariate or multivariate)");
}

FederationConfig FederationConfig::main_preset() { return FederationConfig{}; }

FederationConfig FederationConfig::table1_preset() {
  FederationConfig c;
  c.rounds = 30;
  c.local_epochs = 5;
  return c;
}

void FederationConfig::validate() const {
  if (rounds == 0) fail(kModule, "rounds must be at least 1");
  if (!(participation > 0.0 && participation <= 1.0)) fail(kModule, "participation rate must lie in (0, 1]");
  if (history == 0 || horizon == 0) fail(kModule, "history and horizon must be positive");
  if (dp && dp_factor < 0) fail(kModule, "DP noise factor must be non-negative");
  if (head_hidden == 0) fail(kModule, "head hidden width must be positive");
  local().loss.validate();
  server().validate();
  PromptGeometry{history, 1, temporal_step, 1}.validate();
}

ServerConfig FederationConfig::server() const {
  ServerConfig s;
  s.alpha = alpha;
  s.graph_epochs = graph_epochs;
  s.graph_lr = graph_lr;
  s.sparsity = sparsity;
  s.embed_dim = graph_embed;
  s.mix_iterations = mix_iterations;
  return s;
}

LocalTrainConfig FederationConfig::local() const {
  LocalTrainConfig c;
  c.loss.lambda = lambda;
  c.loss.tau = tau;
  c.loss.subgraph_step = subgraph_step;
  c.loss.local_epochs = local_epochs;
  c.loss.batch_size = batch_size;
  c.optimizer = OptimizerConfig::adamw(learning_rate, weight_decay);
  c.train_layers = share_layers && mode != FederationMode::kFedAvgHead;
  return c;
}

std::vector<ClientData> prepare_data(const std::vector<StationSeries>& stations,
                                     const SplitSpec& split) {
  std::vector<ClientData> out;
  for (const auto& s : stations) {
    ClientData d;
    d.name = s.id;
    d.geo = s.geo;
    d.features = s.features;
    d.target = s.target;
    d.splits = split.boundaries(s.rows());
    d.stats = fit_normalization(s, d.splits.pretrain_train);
    d.series = std::make_shared<const std::vector<double>>(normalize(s, d.stats));
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<PretrainClient> pretrain_clients(const std::vector<ClientData>& data) {
  std::vector<PretrainClient> out;
  for (const auto& d : data) {
    PretrainClient c;
    c.features = d.features;
    const auto& v = *d.series;
    auto rows = [&](SplitRange r) {
      return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(r.begin * d.features),
                                 v.begin() + static_cast<std::ptrdiff_t>(r.end * d.features));
    };
    c.train = rows(d.splits.pretrain_train);
    c.validation = rows(d.splits.pretrain_validation);
    out.push_back(std::move(c));
  }
  return out;
}

ErrorMetrics error_metrics(std::span<const double> prediction, std::span<const double> truth) {
  if (prediction.size() != truth.size()) fail(kModule, "prediction and truth sizes differ");
  if (prediction.empty()) fail(kModule, "cannot evaluate an empty split");
  double abs_sum = 0, sq_sum = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = prediction[i] - truth[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const auto n = static_cast<double>(truth.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

void add_dp_noise(AdaptivePromptSet& prompts, double factor, Rng& rng) {
  if (factor < 0) fail(kModule, "DP noise factor must be non-negative");
  if (factor == 0.0) return;
  for (Tensor t : {prompts.temporal, prompts.variable, prompts.spatial}) {
    for (double& x : t.mutable_values()) x += factor * rng.normal();
  }
}

std::size_t upload_parameter_count(const FederationConfig& config, const FoundationModel& fm,
                                   std::size_t features) {
  const std::size_t in = config.history * features;
  const std::size_t out = config.horizon * (config.task == Task::kUnivariate ? 1 : features);
  if (config.mode == FederationMode::kFedAvgHead) {
    return in * config.head_hidden + config.head_hidden + config.head_hidden * out + out;
  }
  std::size_t n = 4 * config.history * features + features;  // P_T, P_V, W_bt, W_bv, P_S
  if (config.share_layers) {
    for (const auto& name : fm.final_norm_parameter_names()) n += fm.parameter(name).numel();
  }
  return n;
}

std::vector<ClientState> make_clients(const std::vector<ClientData>& data, const FoundationModel& fm,
                                      const FederationConfig& config) {
  config.validate();
  if (data.empty()) fail(kModule, "no clients in the dataset");
  const std::size_t n = data[0].features;
  if (fm.config().feature_dim != n) {
    fail(kModule, "FM snapshot expects " + std::to_string(fm.config().feature_dim) +
                      " variables, dataset has " + std::to_string(n));
  }
  if (config.history > fm.config().max_length) fail(kModule, "history exceeds the FM's maximum length");
  const PromptGeometry geometry{config.history, n, config.temporal_step, config.variable_step};
  Rng prompt_rng(derive_seed(config.seed, kPromptInit));
  const AdaptivePromptSet init = AdaptivePromptSet::initialize(geometry, prompt_rng);
  const std::size_t out_width = config.horizon * (config.task == Task::kUnivariate ? 1 : n);
  Rng head_rng(derive_seed(config.seed, kHeadInit));
  const DenseHead head =
      config.mode == FederationMode::kFedAvgHead
          ? DenseHead::create({config.history * n, config.head_hidden, out_width}, head_rng)
          : DenseHead::zeros(config.history * n, out_width);
  ParameterOverrides layers;
  if (config.share_layers && config.mode != FederationMode::kFedAvgHead) {
    for (const auto& name : fm.final_norm_parameter_names()) layers[name] = fm.parameter(name).detach(true);
  }

  std::vector<ClientState> clients;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const ClientData& d = data[i];
    if (d.features != n) fail(kModule, "client " + d.name + " has a different variable count");
    ClientState c;
    c.id = i;
    c.name = d.name;
    c.geo = d.geo;
    c.mode = config.mode == FederationMode::kFedAvgHead ? TuningMode::kHead : TuningMode::kPrompts;
    c.task = config.task;
    c.prompts = init.clone();
    c.head = head.clone();
    c.layers = copy_layers(layers);
    c.stats = d.stats;
    c.train = ForecastWindows(d.series, n, d.splits.train, config.history, config.horizon, d.target);
    c.validation = ForecastWindows(d.series, n, d.splits.validation, config.history, config.horizon, d.target);
    c.test = ForecastWindows(d.series, n, d.splits.test, config.history, config.horizon, d.target);
    if (c.train.empty()) fail(kModule, "client " + d.name + " has no training windows");
    if (c.test.empty()) fail(kModule, "client " + d.name + " has no test windows");
    clients.push_back(std::move(c));
  }
  return clients;
}

MetricsReport evaluate(std::vector<ClientState>& clients, const FoundationModel& fm, Task task) {
  MetricsReport report;
  report.task = task;
  std::vector<double> all_pred, all_truth, all_pred_phys, all_truth_phys;
  std::size_t all_windows = 0;
  for (auto& c : clients) {
    if (c.test.empty()) fail(kModule, "client " + c.name + " has an empty test split");
    std::vector<std::size_t> idx(c.test.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const Tensor pred = predict(c, fm, c.test, idx);
    const Tensor truth = c.test.targets(idx, task);
    const std::vector<double> p(pred.values().begin(), pred.values().end());
    const std::vector<double> t(truth.values().begin(), truth.values().end());
    NormalizationStats stats = c.stats;
    std::size_t k = c.test.features();
    if (task == Task::kUnivariate) {
      stats = {{c.stats.mean[c.test.target()]}, {c.stats.scale[c.test.target()]}};
      k = 1;
    }
    const auto pp = denormalize(p, k, stats);
    const auto tp = denormalize(t, k, stats);
    report.clients.push_back(series_metrics(c.name, p, t, pp, tp, idx.size()));
    all_pred.insert(all_pred.end(), p.begin(), p.end());
    all_truth.insert(all_truth.end(), t.begin(), t.end());
    all_pred_phys.insert(all_pred_phys.end(), pp.begin(), pp.end());
    all_truth_phys.insert(all_truth_phys.end(), tp.begin(), tp.end());
    all_windows += idx.size();
  }
  report.aggregate =
      series_metrics("all", all_pred, all_truth, all_pred_phys, all_truth_phys, all_windows);
  return report;
}

FederationResult run_federation(const FederationConfig& config, const std::vector<ClientData>& data,
                                const FoundationModel& fm, const RoundObserver& observer) {
  using Clock = std::chrono::steady_clock;
  std::vector<ClientState> clients = make_clients(data, fm, config);
  const std::size_t N = clients.size();
  const bool prompt_mode = config.mode != FederationMode::kFedAvgHead;
  const LocalTrainConfig local = config.local();
  const ServerConfig server = config.server();
  const std::vector<std::string> layer_names =
      local.train_layers ? fm.final_norm_parameter_names() : std::vector<std::string>{};

  // Server state.
  std::vector<double> global_prompts = clients[0].prompts.flatten();
  ParameterOverrides global_layers = copy_layers(clients[0].layers);
  std::vector<double> global_head = clients[0].head.flatten();
  std::vector<std::vector<double>> personalized(N, global_prompts);
  std::vector<ParameterOverrides> personalized_layers(N);
  for (auto& l : personalized_layers) l = copy_layers(global_layers);

  FederationResult result;
  for (std::size_t round = 0; round < config.rounds; ++round) {
    const auto start = Clock::now();
    Rng sampler(derive_seed(config.seed, kSampling, round));
    const std::vector<std::size_t> participants = sample_clients(N, config.participation, sampler);
    RoundLog log;
    log.round = round;
    log.participants = participants;

    std::vector<NeighborCandidate> candidates;
    for (std::size_t id : participants) candidates.push_back({id, clients[id].geo});

    std::vector<std::vector<double>> uploads;
    std::vector<AdaptivePromptSet> upload_sets;
    std::vector<ParameterOverrides> upload_layers;
    std::vector<double> counts;
    std::vector<GeoEncoding> geos;
    std::size_t download = 0;
    for (std::size_t id : participants) {
      ClientState& c = clients[id];
      ClientRound cr;
      cr.id = id;
      if (config.mode == FederationMode::kFedAvgHead) {
        c.head.assign_flat(global_head);
        download = global_head.size();
      } else if (config.mode == FederationMode::kFedAvgPrompts) {
        c.prompts.assign_flat(global_prompts);
        c.layers = copy_layers(global_layers);
        c.regularize = false;
        download = global_prompts.size() + layer_numel(global_layers);
      } else {
        c.prompts.assign_flat(personalized[id]);
        c.layers = copy_layers(personalized_layers[id]);
        c.regularize = config.regularize;
        c.references = {};
        cr.neighbors = neighbor_select(candidates, id, config.subgraph_step);
        if (config.regularize) {
          c.references.global = global_prompts;
          c.references.personalized = personalized[id];
          for (std::size_t j : cr.neighbors) c.references.neighbors.push_back(personalized[j]);
        }
        download = global_prompts.size() * (2 + cr.neighbors.size()) + layer_numel(c.layers);
      }
      Rng rng(derive_seed(config.seed, kLocal, round, id));
      const LocalUpdateResult r = local_update(c, fm, local, rng);
      cr.train_loss = r.epoch_losses.empty() ? 0.0 : r.epoch_losses.back();
      cr.train_mse = r.epoch_mse.empty() ? 0.0 : r.epoch_mse.back();
      log.clients.push_back(cr);

      counts.push_back(static_cast<double>(c.sample_count()));
      geos.push_back(c.geo);
      if (prompt_mode) {
        AdaptivePromptSet sent = c.prompts.clone();
        if (config.dp) {
          Rng noise(derive_seed(config.seed, kNoise, round, id));
          add_dp_noise(sent, config.dp_factor, noise);
        }
        uploads.push_back(sent.flatten());
        upload_sets.push_back(std::move(sent));
        upload_layers.push_back(copy_layers(c.layers));
      } else {
        uploads.push_back(c.head.flatten());
      }
    }
    log.upload_parameters = uploads.front().size() + (prompt_mode ? layer_numel(upload_layers.front()) : 0);
    log.download_parameters = download;

    // Server step.
    std::vector<std::vector<double>> mixed;
    if (!prompt_mode) {
      global_head = aggregate_global(uploads, counts);
    } else {
      global_prompts = aggregate_global(uploads, counts);
      global_layers = average_layers(upload_layers, counts);
      if (config.mode == FederationMode::kFedWing) {
        if (config.graph) {
          Rng graph_rng(derive_seed(config.seed, kGraph, round));
          AdjacencySet g = build_graphs(upload_sets, geos, server, graph_rng, &log.dgm_losses);
          mixed = reconstruct_prompts(uploads, g.dynamic, g.fused, server.alpha, server.mix_iterations);
          const auto layers_mixed = mix_fm_layers(upload_layers, layer_names, g.dynamic, g.fused,
                                                  server.alpha, server.mix_iterations);
          for (auto& l : personalized_layers) l = copy_layers(global_layers);
          for (std::size_t k = 0; k < participants.size(); ++k) {
            personalized[participants[k]] = mixed[k];
            personalized_layers[participants[k]] = copy_layers(layers_mixed[k]);
          }
          if (config.record_graphs) log.graphs = std::move(g);
        } else {
          mixed.assign(participants.size(), global_prompts);
          for (std::size_t id : participants) {
            personalized[id] = global_prompts;
            personalized_layers[id] = copy_layers(global_layers);
          }
        }
      }
    }
    if (observer) {
      observer(RoundObservation{round, participants, uploads, counts, global_prompts, mixed});
    }
    log.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    log_info(kModule, "round " + std::to_string(round + 1) + "/" + std::to_string(config.rounds) +
                          " done in " + std::to_string(log.wall_seconds) + " s");
    result.rounds.push_back(std::move(log));
  }

  // Final evaluation state.
  for (auto& c : clients) {
    if (config.mode == FederationMode::kFedAvgHead) {
      c.head.assign_flat(global_head);
    } else if (config.mode == FederationMode::kFedAvgPrompts) {
      c.prompts.assign_flat(global_prompts);
      c.layers = copy_layers(global_layers);
    }
  }
  result.metrics = evaluate(clients, fm, config.task);
  result.metrics.mode = mode_name(config.mode);
  result.metrics.upload_parameters = upload_parameter_count(config, fm, data[0].features);
  result.metrics.participants_per_round = participant_count(N, config.participation);

  Checkpoint& ck = result.checkpoint;
  ck.mode = config.mode;
  ck.task = config.task;
  ck.history = config.history;
  ck.horizon = config.horizon;
  ck.rounds_completed = config.rounds;
  if (prompt_mode) {
    ck.global_prompts = global_prompts;
    ck.global_layers = layer_values(global_layers);
  } else {
    ck.global_head = global_head;
  }
  for (const auto& c : clients) {
    Checkpoint::Client cc;
    cc.name = c.name;
    if (prompt_mode) cc.prompts = c.prompts.flatten();
    cc.head = c.head.flatten();
    cc.layers = layer_values(c.layers);
    ck.clients.push_back(std::move(cc));
  }

  if (prompt_mode) {
    // Global prompts with each client's own head, logged alongside.
    std::vector<ClientState> global_view;
    for (const auto& c : clients) {
      ClientState g = c;
      g.prompts = c.prompts.clone();
      g.prompts.assign_flat(global_prompts);
      g.layers = copy_layers(global_layers);
      global_view.push_back(std::move(g));
    }
    result.metrics.global = evaluate(global_view, fm, config.task).aggregate;
    result.metrics.global->client = "global";
  }
  return result;
}

MetricsReport evaluate_checkpoint(const Checkpoint& checkpoint, const std::vector<ClientData>& data,
                                  const FoundationModel& fm, const FederationConfig& config) {
  FederationConfig cfg = config;
  cfg.mode = checkpoint.mode;
  cfg.task = checkpoint.task;
  cfg.history = checkpoint.history;
  cfg.horizon = checkpoint.horizon;
  std::vector<ClientState> clients = make_clients(data, fm, cfg);
  if (checkpoint.clients.size() != clients.size()) {
    fail(kModule, "checkpoint holds " + std::to_string(checkpoint.clients.size()) +
                      " clients, dataset has " + std::to_string(clients.size()));
  }
  for (std::size_t i = 0; i < clients.size(); ++i) {
    const auto& cc = checkpoint.clients[i];
    if (cc.name != clients[i].name) fail(kModule, "checkpoint client '" + cc.name + "' does not match dataset");
    if (!cc.prompts.empty()) clients[i].prompts.assign_flat(cc.prompts);
    clients[i].head.assign_flat(cc.head);
    clients[i].layers = layers_from_values(cc.layers, fm);
  }
  MetricsReport report = evaluate(clients, fm, cfg.task);
  report.mode = mode_name(cfg.mode);
  report.upload_parameters = upload_parameter_count(cfg, fm, data[0].features);
  report.participants_per_round = participant_count(clients.size(), cfg.participation);
  if (cfg.mode != FederationMode::kFedAvgHead) {
    for (auto& c : clients) {
      c.prompts.assign_flat(checkpoint.global_prompts);
      c.layers = layers_from_values(checkpoint.global_layers, fm);
    }
    report.global = evaluate(clients, fm, cfg.task).aggregate;
    report.global->client = "global";
  }
  return report;
}

}  // namespace fedwing
