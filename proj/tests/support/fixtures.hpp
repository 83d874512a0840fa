// SPDX-License-Identifier: Apache-2.0
//
// Small datasets and models for tests that need a working federation.
#pragma once

#include <cstdint>
#include <vector>

#include "fedwing/data_io.hpp"
#include "fedwing/federation.hpp"
#include "fedwing/fm.hpp"
#include "fedwing/rng.hpp"

namespace fixture {

inline fedwing::FMConfig small_fm(std::size_t features = 4) {
  fedwing::FMConfig c = fedwing::FMConfig::desk(features);
  c.embed_dim = 16;
  c.heads = 2;
  c.ffn_dim = 16;
  c.norm_groups = 2;
  c.layers = 1;
  c.max_length = 24;
  return c;
}

inline std::vector<fedwing::ClientData> small_data(std::size_t stations = 5, std::size_t hours = 400,
                                                   std::size_t variables = 4, std::uint64_t seed = 7) {
  fedwing::SynthConfig s;
  s.stations = stations;
  s.hours = hours;
  s.variables = variables;
  s.seed = seed;
  return fedwing::prepare_data(fedwing::synth_generate(s), fedwing::SplitSpec{});
}

inline fedwing::FoundationModel small_model(std::size_t features = 4, std::uint64_t seed = 3) {
  fedwing::Rng rng(seed);
  return fedwing::FoundationModel::initialize(small_fm(features), rng);
}

/// Short table1-like run on the small fixtures.
inline fedwing::FederationConfig quick_config(fedwing::FederationMode mode) {
  fedwing::FederationConfig c = fedwing::FederationConfig::table1_preset();
  c.mode = mode;
  c.rounds = 3;
  c.local_epochs = 2;
  c.participation = 0.6;
  c.batch_size = 64;
  c.graph_epochs = 5;
  return c;
}

}  // namespace fixture
