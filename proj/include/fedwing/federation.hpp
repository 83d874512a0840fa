// SPDX-License-Identifier: Apache-2.0
//
// Round loop: client sampling, prompt exchange, optional DP noise, server
// graph step, aggregation and final evaluation.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedwing/data_io.hpp"
#include "fedwing/fm.hpp"
#include "fedwing/graph_server.hpp"
#include "fedwing/local_trainer.hpp"
#include "fedwing/pretrain.hpp"

namespace fedwing {

class Rng;

enum class FederationMode { kFedAvgHead, kFedAvgPrompts, kFedWing };

std::string mode_name(FederationMode mode);
FederationMode parse_mode(const std::string& text);
std::string task_name(Task task);
Task parse_task(const std::string& text);

struct FederationConfig {
  FederationMode mode = FederationMode::kFedWing;
  Task task = Task::kMultivariate;
  std::size_t rounds = 50;
  std::size_t local_epochs = 25;
  double participation = 0.3;
  double lambda = 0.7;
  double tau = 0.3;
  std::size_t subgraph_step = 1;
  std::size_t temporal_step = 1;
  std::size_t variable_step = 1;
  std::size_t history = 12;
  std::size_t horizon = 12;
  std::size_t batch_size = 256;
  double learning_rate = 0.01;
  double weight_decay = 1e-4;
  bool graph = true;       // fedwing server graph step
  bool regularize = true;  // fedwing prompt-wise local loss
  bool share_layers = true;  // exchange the final-layer normalization copies
  bool dp = false;
  double dp_factor = 0.01;
  double alpha = 0.99;
  std::size_t graph_epochs = 40;
  double graph_lr = 0.001;
  double sparsity = 0.0;
  std::size_t graph_embed = 16;
  std::size_t mix_iterations = 1;
  std::size_t head_hidden = 64;  // hidden width of the shared head
  bool record_graphs = false;
  std::uint64_t seed = 1;

  /// 50 rounds x 25 local epochs, C = 0.3.
  static FederationConfig main_preset();
  /// 30 rounds x 5 local updates.
  static FederationConfig table1_preset();
  void validate() const;
  ServerConfig server() const;
  LocalTrainConfig local() const;
};

/// Normalized station data ready for federation, one entry per station.
struct ClientData {
  std::string name;
  GeoEncoding geo;
  std::size_t features = 0;
  std::size_t target = 0;
  NormalizationStats stats;
  SplitBoundaries splits;
  std::shared_ptr<const std::vector<double>> series;  // normalized, rows x features
};

/// z-score stats come from each station's pre-training train rows.
std::vector<ClientData> prepare_data(const std::vector<StationSeries>& stations,
                                     const SplitSpec& split);
std::vector<PretrainClient> pretrain_clients(const std::vector<ClientData>& data);

struct ClientRound {
  std::size_t id = 0;
  double train_loss = 0.0;  // last local epoch
  double train_mse = 0.0;
  std::vector<std::size_t> neighbors;
};

struct RoundLog {
  std::size_t round = 0;
  std::vector<std::size_t> participants;
  std::vector<ClientRound> clients;
  std::size_t upload_parameters = 0;    // per participating client
  std::size_t download_parameters = 0;  // per participating client
  double wall_seconds = 0.0;
  std::vector<double> dgm_losses;
  std::optional<AdjacencySet> graphs;
};

struct ErrorMetrics {
  double mae = 0.0;
  double rmse = 0.0;
};

/// MAE and RMSE over all cells.
ErrorMetrics error_metrics(std::span<const double> prediction, std::span<const double> truth);

struct SeriesMetrics {
  std::string client;
  std::size_t windows = 0;
  ErrorMetrics normalized;
  ErrorMetrics physical;
};

struct MetricsReport {
  std::string mode;
  Task task = Task::kMultivariate;
  std::vector<SeriesMetrics> clients;
  SeriesMetrics aggregate;  // pooled over every client's test cells
  std::optional<SeriesMetrics> global;  // prompt modes: P* with each client's head
  std::size_t upload_parameters = 0;    // per participating client per round
  std::size_t participants_per_round = 0;
};

/// Trained state needed to reproduce the final evaluation.
struct Checkpoint {
  FederationMode mode = FederationMode::kFedWing;
  Task task = Task::kMultivariate;
  std::size_t history = 12;
  std::size_t horizon = 12;
  std::size_t rounds_completed = 0;
  std::vector<double> global_prompts;
  std::map<std::string, std::vector<double>> global_layers;
  std::vector<double> global_head;
  struct Client {
    std::string name;
    std::vector<double> prompts;  // evaluation prompts (empty in head mode)
    std::vector<double> head;
    std::map<std::string, std::vector<double>> layers;
  };
  std::vector<Client> clients;
};

struct RoundObservation {
  std::size_t round = 0;
  const std::vector<std::size_t>& participants;
  const std::vector<std::vector<double>>& uploads;  // flattened prompt uploads
  const std::vector<double>& counts;
  const std::vector<double>& global_prompts;        // P* after aggregation
  const std::vector<std::vector<double>>& personalized;  // P_i^l of the participants
};

using RoundObserver = std::function<void(const RoundObservation&)>;

struct FederationResult {
  MetricsReport metrics;
  std::vector<RoundLog> rounds;
  Checkpoint checkpoint;
};

/// Adds factor * N(0, 1) to P_T, P_V and P_S; W_bt / W_bv untouched. A
/// zero factor leaves the set bit-identical and draws nothing.
void add_dp_noise(AdaptivePromptSet& prompts, double factor, Rng& rng);

/// Builds client states for `mode` with common initial prompts and heads.
std::vector<ClientState> make_clients(const std::vector<ClientData>& data, const FoundationModel& fm,
                                      const FederationConfig& config);

FederationResult run_federation(const FederationConfig& config, const std::vector<ClientData>& data,
                                const FoundationModel& fm, const RoundObserver& observer = {});

/// Test-split metrics of every client with its current state.
MetricsReport evaluate(std::vector<ClientState>& clients, const FoundationModel& fm, Task task);

/// Restores the evaluation state recorded in a checkpoint and evaluates.
MetricsReport evaluate_checkpoint(const Checkpoint& checkpoint, const std::vector<ClientData>& data,
                                  const FoundationModel& fm, const FederationConfig& config);

/// Per-client upload sizes for a mode (prompts + shared layers, or head).
std::size_t upload_parameter_count(const FederationConfig& config, const FoundationModel& fm,
                                   std::size_t features);

// Structured-text (JSON) artifacts.
std::string metrics_json(const MetricsReport& report);
std::string round_log_json(const std::vector<RoundLog>& rounds, const Checkpoint& checkpoint,
                           const FederationConfig& config);
std::string graph_dump_json(const std::vector<RoundLog>& rounds);
Checkpoint read_checkpoint(const std::string& round_log_path);
FederationConfig read_run_config_from_log(const std::string& round_log_path);
std::string pretrain_curve_json(const PretrainResult& result);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace fedwing
