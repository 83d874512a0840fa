// SPDX-License-Identifier: Apache-2.0
#include "fedwing/run_config.hpp"

#include <type_traits>

#include "fedwing/error.hpp"
#include "fedwing/json_io.hpp"

namespace fedwing {
namespace json_io {
namespace {

const char* kModule = "cli";

template <class F>
void fields(FederationConfig& c, F&& f) {
  f("mode", c.mode);
  f("task", c.task);
  f("rounds", c.rounds);
  f("local_epochs", c.local_epochs);
  f("participation", c.participation);
  f("lambda", c.lambda);
  f("tau", c.tau);
  f("subgraph_step", c.subgraph_step);
  f("temporal_step", c.temporal_step);
  f("variable_step", c.variable_step);
  f("history", c.history);
  f("horizon", c.horizon);
  f("batch_size", c.batch_size);
  f("learning_rate", c.learning_rate);
  f("weight_decay", c.weight_decay);
  f("graph", c.graph);
  f("regularize", c.regularize);
  f("share_layers", c.share_layers);
  f("dp", c.dp);
  f("dp_factor", c.dp_factor);
  f("alpha", c.alpha);
  f("graph_epochs", c.graph_epochs);
  f("graph_lr", c.graph_lr);
  f("sparsity", c.sparsity);
  f("graph_embed", c.graph_embed);
  f("mix_iterations", c.mix_iterations);
  f("head_hidden", c.head_hidden);
  f("record_graphs", c.record_graphs);
  f("seed", c.seed);
}

template <class F>
void fields(FMConfig& c, F&& f) {
  f("feature_dim", c.feature_dim);
  f("embed_dim", c.embed_dim);
  f("heads", c.heads);
  f("ffn_dim", c.ffn_dim);
  f("dropout", c.dropout);
  f("layers", c.layers);
  f("max_length", c.max_length);
  f("norm_groups", c.norm_groups);
  f("norm_eps", c.norm_eps);
}

template <class F>
void fields(SplitSpec& c, F&& f) {
  f("pretrain_train_fraction", c.pretrain_train_fraction);
  f("pretrain_end_fraction", c.pretrain_end_fraction);
  f("finetune_train", c.finetune_train);
  f("finetune_validation", c.finetune_validation);
  f("finetune_test", c.finetune_test);
}

template <class F>
void fields(PretrainConfig& c, F&& f) {
  f("rounds", c.rounds);
  f("local_epochs", c.local_epochs);
  f("participation", c.participation);
  f("window", c.window);
  f("batch_size", c.batch_size);
  f("validation_windows", c.validation_windows);
  f("mask_rate", c.mask.rate);
  f("mask_length", c.mask.mean_masked_length);
  f("learning_rate", c.optimizer.learning_rate);
  f("weight_decay", c.optimizer.weight_decay);
  f("seed", c.seed);
}

template <class F>
void fields(SynthConfig& c, F&& f) {
  f("stations", c.stations);
  f("hours", c.hours);
  f("variables", c.variables);
  f("seed", c.seed);
  f("lat_min", c.lat_min);
  f("lat_max", c.lat_max);
  f("lon_min", c.lon_min);
  f("lon_max", c.lon_max);
  f("noise", c.noise);
}

struct Writer {
  json& out;
  void operator()(const char* k, FederationMode& v) { out[k] = mode_name(v); }
  void operator()(const char* k, Task& v) { out[k] = task_name(v); }
  template <class T>
  void operator()(const char* k, T& v) { out[k] = v; }
};

template <class T>
void assign(T& target, const json& value, const std::string& key) {
  if constexpr (std::is_same_v<T, FederationMode>) {
    if (!value.is_string()) fail(kModule, key + " must be a string");
    target = parse_mode(value.get<std::string>());
  } else if constexpr (std::is_same_v<T, Task>) {
    if (!value.is_string()) fail(kModule, key + " must be a string");
    target = parse_task(value.get<std::string>());
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!value.is_boolean()) fail(kModule, key + " must be true or false");
    target = value.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!value.is_number_unsigned()) fail(kModule, key + " must be a non-negative integer");
    target = value.get<T>();
  } else {
    if (!value.is_number()) fail(kModule, key + " must be a number");
    target = value.get<T>();
  }
}

template <class C>
json write(const C& c) {
  json out = json::object();
  C copy = c;
  fields(copy, Writer{out});
  return out;
}

template <class C>
void read(C& c, const json& j, const std::string& where) {
  if (!j.is_object()) fail(kModule, "section '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    fields(c, [&](const char* k, auto& member) {
      if (key == k) {
        assign(member, value, where + "." + key);
        found = true;
      }
    });
    if (!found) fail(kModule, "unknown key '" + where + "." + key + "'");
  }
}

}  // namespace

json to_json(const FederationConfig& c) { return write(c); }
json to_json(const FMConfig& c) { return write(c); }
json to_json(const SplitSpec& c) { return write(c); }
json to_json(const PretrainConfig& c) { return write(c); }
json to_json(const SynthConfig& c) { return write(c); }

void update(FederationConfig& c, const json& j, const std::string& where) { read(c, j, where); }
void update(FMConfig& c, const json& j, const std::string& where) { read(c, j, where); }
void update(SplitSpec& c, const json& j, const std::string& where) { read(c, j, where); }
void update(PretrainConfig& c, const json& j, const std::string& where) { read(c, j, where); }
void update(SynthConfig& c, const json& j, const std::string& where) { read(c, j, where); }

}  // namespace json_io

namespace {

json_io::json parse_document(const std::string& text, const std::string& source) {
  json_io::json j;
  try {
    j = json_io::json::parse(text);
  } catch (const json_io::json::exception& e) {
    fail("cli", source + ": " + e.what());
  }
  if (!j.is_object()) fail("cli", source + ": configuration must be a JSON object");
  return j;
}

}  // namespace

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "main") {
    c.federation = FederationConfig::main_preset();
  } else if (name == "table1") {
    c.federation = FederationConfig::table1_preset();
  } else {
    fail("cli", "unknown preset '" + name + "' (expected main or table1)");
  }
  return c;
}

std::string config_preset(const std::string& text, const std::string& source) {
  const auto j = parse_document(text, source);
  if (!j.contains("preset")) return "";
  if (!j["preset"].is_string()) fail("cli", source + ": preset must be a string");
  return j["preset"].get<std::string>();
}

void apply_config_json(RunConfig& config, const std::string& text, const std::string& source) {
  const auto j = parse_document(text, source);
  for (const auto& [key, value] : j.items()) {
    auto text_field = [&](std::string& target) {
      if (!value.is_string()) fail("cli", source + ": " + key + " must be a string");
      target = value.get<std::string>();
    };
    if (key == "preset") {
      text_field(config.preset);
    } else if (key == "manifest") {
      text_field(config.manifest);
    } else if (key == "snapshot") {
      text_field(config.snapshot);
    } else if (key == "output") {
      text_field(config.output);
    } else if (key == "fm") {
      json_io::update(config.fm, value, "fm");
    } else if (key == "federation") {
      json_io::update(config.federation, value, "federation");
    } else if (key == "split") {
      json_io::update(config.split, value, "split");
    } else if (key == "pretrain") {
      json_io::update(config.pretrain, value, "pretrain");
    } else if (key == "synth") {
      json_io::update(config.synth, value, "synth");
    } else {
      fail("cli", source + ": unknown key '" + key + "'");
    }
  }
}

std::string config_to_json(const RunConfig& config) {
  json_io::json j;
  j["preset"] = config.preset;
  j["manifest"] = config.manifest;
  j["snapshot"] = config.snapshot;
  j["output"] = config.output;
  j["fm"] = json_io::to_json(config.fm);
  j["federation"] = json_io::to_json(config.federation);
  j["split"] = json_io::to_json(config.split);
  j["pretrain"] = json_io::to_json(config.pretrain);
  j["synth"] = json_io::to_json(config.synth);
  return j.dump(2) + "\n";
}

}  // namespace fedwing
