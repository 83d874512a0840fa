// SPDX-License-Identifier: Apache-2.0
//
// Encoder-only transformer used as the frozen foundation model. It maps a
// batch of sequences [batch x time x width] to [batch x time x features],
// where width may be up to twice the feature count (extra columns come from
// inter-variable prompts and are zero padded at the input projection).
#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fedwing/tensor.hpp"

namespace fedwing {

class Rng;

struct FMConfig {
  std::size_t feature_dim = 4;
  std::size_t embed_dim = 64;
  std::size_t heads = 4;
  std::size_t ffn_dim = 64;
  double dropout = 0.3;
  std::size_t layers = 2;
  std::size_t max_length = 48;
  std::size_t norm_groups = 4;
  double norm_eps = 1e-5;

  /// Desk-scale model used by default and in tests.
  static FMConfig desk(std::size_t features);
  /// Full-size model (12 variables, 256-wide).
  static FMConfig full();

  std::size_t input_width() const { return 2 * feature_dim; }
  void validate() const;
  bool operator==(const FMConfig&) const = default;
};

/// Parameters substituted by name during a forward pass (per-client copies of
/// the graph-mixed layers, for instance).
using ParameterOverrides = std::map<std::string, Tensor>;

struct ForwardOptions {
  bool train = false;
  Rng* rng = nullptr;
  const ParameterOverrides* overrides = nullptr;
};

class FoundationModel {
 public:
  FoundationModel() = default;
  static FoundationModel initialize(const FMConfig& config, Rng& rng);

  /// x: [batch x time x width], width in [1, 2 * feature_dim].
  Tensor forward(const Tensor& x, const ForwardOptions& options = {}) const;

  const FMConfig& config() const { return config_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  const Tensor& parameter(const std::string& name) const;
  bool has_parameter(const std::string& name) const;
  std::size_t parameter_count() const;

  /// Deep copy; copies become leaves with the given requires_grad flag.
  FoundationModel clone(bool requires_grad) const;
  std::vector<Tensor> parameter_tensors() const;
  void set_parameter_values(const std::string& name, std::span<const double> values);

  /// Names of the normalization scale/shift arrays of the final encoder layer.
  std::vector<std::string> final_norm_parameter_names() const;

  bool operator==(const FoundationModel& other) const;

  // Snapshot container: magic, format version, FMConfig, then named arrays
  // with shapes. load(save(m)) reproduces every value bit for bit.
  void save(const std::string& path) const;
  static FoundationModel load(const std::string& path);

 private:
  void add_parameter(std::string name, Tensor value);
  const Tensor& lookup(const std::string& name, const ParameterOverrides* overrides) const;

  FMConfig config_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::map<std::string, std::size_t> index_;
};

/// FedAvg: sample-weighted mean of equally shaped models.
FoundationModel average_models(const std::vector<const FoundationModel*>& models,
                               const std::vector<double>& weights);

}  // namespace fedwing
