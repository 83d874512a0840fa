// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include <json.hpp>

#include "fedwing/data_io.hpp"
#include "fedwing/federation.hpp"
#include "fedwing/fm.hpp"
#include "fedwing/pretrain.hpp"

namespace fedwing::json_io {

using nlohmann::json;

json to_json(const FederationConfig& c);
json to_json(const FMConfig& c);
json to_json(const SplitSpec& c);
json to_json(const PretrainConfig& c);
json to_json(const SynthConfig& c);

// Strict updates: every key must be known; `where` names the section in
// error messages.
void update(FederationConfig& c, const json& j, const std::string& where);
void update(FMConfig& c, const json& j, const std::string& where);
void update(SplitSpec& c, const json& j, const std::string& where);
void update(PretrainConfig& c, const json& j, const std::string& where);
void update(SynthConfig& c, const json& j, const std::string& where);

}  // namespace fedwing::json_io
