// SPDX-License-Identifier: Apache-2.0
//
// JSON artifacts of a run. Field names are stable; see README for the schema.
#include <fstream>
#include <sstream>

#include "fedwing/error.hpp"
#include "fedwing/federation.hpp"
#include "fedwing/json_io.hpp"

namespace fedwing {
namespace {

using json_io::json;

const char* kModule = "federation-harness";

json metrics_entry(const SeriesMetrics& m) {
  return {{"client", m.client},
          {"windows", m.windows},
          {"normalized", {{"mae", m.normalized.mae}, {"rmse", m.normalized.rmse}}},
          {"physical", {{"mae", m.physical.mae}, {"rmse", m.physical.rmse}}}};
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.n; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.n; ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json checkpoint_json(const Checkpoint& ck) {
  json clients = json::array();
  for (const auto& c : ck.clients) {
    clients.push_back({{"name", c.name}, {"prompts", c.prompts}, {"head", c.head}, {"layers", c.layers}});
  }
  return {{"mode", mode_name(ck.mode)},
          {"task", task_name(ck.task)},
          {"history", ck.history},
          {"horizon", ck.horizon},
          {"rounds_completed", ck.rounds_completed},
          {"global_prompts", ck.global_prompts},
          {"global_layers", ck.global_layers},
          {"global_head", ck.global_head},
          {"clients", clients}};
}

json parse_file(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(kModule, path + ": " + e.what());
  }
}

}  // namespace

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(kModule, "cannot write " + path);
  out << text;
  if (!out) fail(kModule, "write failed for " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(kModule, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string metrics_json(const MetricsReport& report) {
  json j;
  j["schema"] = "fedwing.metrics/1";
  j["mode"] = report.mode;
  j["task"] = task_name(report.task);
  j["upload_parameters"] = report.upload_parameters;
  j["participants_per_round"] = report.participants_per_round;
  j["aggregate"] = metrics_entry(report.aggregate);
  if (report.global) j["global"] = metrics_entry(*report.global);
  json clients = json::array();
  for (const auto& c : report.clients) clients.push_back(metrics_entry(c));
  j["clients"] = clients;
  return j.dump(2) + "\n";
}

std::string round_log_json(const std::vector<RoundLog>& rounds, const Checkpoint& checkpoint,
                           const FederationConfig& config) {
  json j;
  j["schema"] = "fedwing.rounds/1";
  j["config"] = json_io::to_json(config);
  json rs = json::array();
  for (const auto& r : rounds) {
    json clients = json::array();
    for (const auto& c : r.clients) {
      clients.push_back({{"id", c.id},
                         {"train_loss", c.train_loss},
                         {"train_mse", c.train_mse},
                         {"neighbors", c.neighbors}});
    }
    rs.push_back({{"round", r.round},
                  {"participants", r.participants},
                  {"clients", clients},
                  {"upload_parameters", r.upload_parameters},
                  {"download_parameters", r.download_parameters},
                  {"wall_seconds", r.wall_seconds},
                  {"dgm_losses", r.dgm_losses}});
  }
  j["rounds"] = rs;
  j["checkpoint"] = checkpoint_json(checkpoint);
  return j.dump(1) + "\n";
}

std::string graph_dump_json(const std::vector<RoundLog>& rounds) {
  json j;
  j["schema"] = "fedwing.graphs/1";
  json rs = json::array();
  for (const auto& r : rounds) {
    if (!r.graphs) continue;
    const AdjacencySet& g = *r.graphs;
    rs.push_back({{"round", r.round},
                  {"participants", r.participants},
                  {"matrices",
                   {{"A_Geo", matrix_json(g.geo)},
                    {"A_S", matrix_json(g.spatial)},
                    {"A_TV", matrix_json(g.temporal_variable)},
                    {"A", matrix_json(g.dynamic)},
                    {"A_fused", matrix_json(g.fused)}}},
                  {"auxiliary",
                   {{"geo_similarity", matrix_json(g.geo_similarity)},
                    {"softmax_factor", matrix_json(g.attention)}}}});
  }
  j["rounds"] = rs;
  return j.dump(1) + "\n";
}

Checkpoint read_checkpoint(const std::string& round_log_path) {
  const json j = parse_file(round_log_path);
  if (!j.contains("checkpoint")) fail(kModule, round_log_path + ": no checkpoint section");
  const json& c = j["checkpoint"];
  Checkpoint ck;
  try {
    ck.mode = parse_mode(c.at("mode").get<std::string>());
    ck.task = parse_task(c.at("task").get<std::string>());
    ck.history = c.at("history").get<std::size_t>();
    ck.horizon = c.at("horizon").get<std::size_t>();
    ck.rounds_completed = c.at("rounds_completed").get<std::size_t>();
    ck.global_prompts = c.at("global_prompts").get<std::vector<double>>();
    ck.global_layers = c.at("global_layers").get<std::map<std::string, std::vector<double>>>();
    ck.global_head = c.at("global_head").get<std::vector<double>>();
    for (const auto& cl : c.at("clients")) {
      Checkpoint::Client cc;
      cc.name = cl.at("name").get<std::string>();
      cc.prompts = cl.at("prompts").get<std::vector<double>>();
      cc.head = cl.at("head").get<std::vector<double>>();
      cc.layers = cl.at("layers").get<std::map<std::string, std::vector<double>>>();
      ck.clients.push_back(std::move(cc));
    }
  } catch (const json::exception& e) {
    fail(kModule, round_log_path + ": malformed checkpoint: " + e.what());
  }
  return ck;
}

FederationConfig read_run_config_from_log(const std::string& round_log_path) {
  const json j = parse_file(round_log_path);
  if (!j.contains("config")) fail(kModule, round_log_path + ": no config section");
  FederationConfig c;
  json_io::update(c, j["config"], "config");
  return c;
}

std::string pretrain_curve_json(const PretrainResult& result) {
  json j;
  j["schema"] = "fedwing.pretrain/1";
  json rs = json::array();
  for (const auto& r : result.curve) {
    rs.push_back({{"round", r.round},
                  {"participants", r.participants},
                  {"train_loss", r.train_loss},
                  {"validation_loss", r.validation_loss}});
  }
  j["rounds"] = rs;
  return j.dump(2) + "\n";
}

}  // namespace fedwing
