// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: presets plus a JSON file whose keys override
// command-line flags, which override defaults. Unknown keys are rejected.
#pragma once

#include <string>

#include "fedwing/data_io.hpp"
#include "fedwing/federation.hpp"
#include "fedwing/fm.hpp"
#include "fedwing/pretrain.hpp"

namespace fedwing {

struct RunConfig {
  std::string preset = "main";
  std::string manifest;
  std::string snapshot;
  std::string output = "run";
  FMConfig fm = FMConfig::desk(4);
  FederationConfig federation = FederationConfig::main_preset();
  SplitSpec split;
  PretrainConfig pretrain;
  SynthConfig synth;
};

/// "main" or "table1"; both share the FM, split and pre-training defaults.
RunConfig preset_config(const std::string& name);

/// Applies a JSON document (object) on top of `config`.
void apply_config_json(RunConfig& config, const std::string& text, const std::string& source);
/// Reads the "preset" key of a config document, if any.
std::string config_preset(const std::string& text, const std::string& source);
std::string config_to_json(const RunConfig& config);

}  // namespace fedwing
