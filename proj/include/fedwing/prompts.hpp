// SPDX-License-Identifier: Apache-2.0
//
// Adaptive prompts attached to the input of the frozen foundation model:
// a temporal prompt P_T and an inter-variable prompt P_V (both grown block by
// block to [length x width]), their weighting matrices W_bt / W_bv, and a
// spatial prompt P_S that injects the station's location.
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "fedwing/fm.hpp"
#include "fedwing/head.hpp"
#include "fedwing/tensor.hpp"

namespace fedwing {

class Rng;

struct GeoEncoding {
  double latitude = 0.0;   // degrees, [-90, 90]
  double longitude = 0.0;  // degrees, [-180, 180]
  void validate() const;
  bool operator==(const GeoEncoding&) const = default;
};

struct PromptGeometry {
  std::size_t length = 12;        // m, rows of P_T / P_V; equals the history length
  std::size_t width = 4;          // n, variables
  std::size_t temporal_step = 1;  // m_t
  std::size_t variable_step = 1;  // n_t
  void validate() const;
};

inline constexpr double kPromptInitStd = 0.02;
inline constexpr double kPromptWeightInit = 0.5;
inline constexpr double kSpatialNormEps = 1e-5;

class AdaptivePromptSet {
 public:
  static constexpr std::array<const char*, 5> kNames = {"P_T", "P_V", "P_S", "W_bt", "W_bv"};

  AdaptivePromptSet() = default;
  /// Full-size prompts: P_T, P_V ~ N(0, 0.02^2), P_S ~ N(0, 0.02^2), W_bt = W_bv = 0.5.
  static AdaptivePromptSet initialize(const PromptGeometry& geometry, Rng& rng);
  /// P_T and P_V start empty and are grown by iterate_temporal / iterate_variable.
  static AdaptivePromptSet unexpanded(const PromptGeometry& geometry, Rng& rng);

  const PromptGeometry& geometry() const { return geometry_; }
  std::size_t temporal_rows() const { return temporal.defined() ? temporal.dim(0) : 0; }
  std::size_t variable_columns() const { return variable.defined() ? variable.dim(1) : 0; }
  /// True once P_T and P_V reach [length x width].
  bool complete() const;

  /// P_T, P_V, P_S, W_bt, W_bv in that order.
  std::vector<Tensor> tensors() const;
  std::size_t parameter_count() const;
  std::vector<double> flatten() const;
  /// Inverse of flatten() for a complete set.
  void assign_flat(std::span<const double> values);
  AdaptivePromptSet clone() const;

  /// Appends a fresh [temporal_step x width] block to P_T.
  void grow_temporal(Rng& rng);
  /// Appends a fresh [length x variable_step] block to P_V.
  void grow_variable(Rng& rng);

  Tensor temporal;         // P_T
  Tensor variable;         // P_V
  Tensor spatial;          // P_S, [1 x width]
  Tensor temporal_weight;  // W_bt
  Tensor variable_weight;  // W_bv

 private:
  PromptGeometry geometry_;
};

struct IterationTrace {
  std::size_t steps = 0;
  std::vector<std::size_t> input_extents;  // temporal length or variable width per step
  Tensor last_output;
};

/// Temporal prompt iteration: step q feeds [x_ipt ; P_T(first q*m_t rows)]
/// through the FM, growing P_T by one block when it is shorter than needed.
/// Runs length/m_t steps; P_T ends at [length x width].
IterationTrace iterate_temporal(const Tensor& x_ipt, AdaptivePromptSet& prompts,
                                const FoundationModel& fm, const ForwardOptions& options, Rng& rng);

/// Variable-axis mirror: step p feeds [x_ipt | P_V(first p*n_t columns)].
IterationTrace iterate_variable(const Tensor& x_ipt, AdaptivePromptSet& prompts,
                                const FoundationModel& fm, const ForwardOptions& options, Rng& rng);

/// X = P_T (.) W_bt + P_V (.) W_bv
Tensor combine(const AdaptivePromptSet& prompts);

struct SpatialPrompt {
  Tensor spatial;   // P_S' [1 x width]
  Tensor combined;  // X'   [length x width]
};

/// Fixed location directions (rows for latitude and longitude) used to fold
/// (lat/90, lon/180) into the spatial prompt; identical for every client.
std::array<std::vector<double>, 2> geo_directions(std::size_t width);

/// P_S' = normalize(P_S + lat/90 * g_lat + lon/180 * g_lon)
/// X'   = normalize(X + broadcast(P_S'))
/// with per-row zero-mean / unit-variance normalization.
SpatialPrompt apply_spatial(const Tensor& combined, const Tensor& spatial, const GeoEncoding& geo);

/// Head(F(x_ipt + X')) for a batch x: [batch x length x width]; the FM output
/// is flattened per sample before the head.
Tensor forward_with_prompts(const Tensor& x, const AdaptivePromptSet& prompts,
                            const GeoEncoding& geo, const FoundationModel& fm,
                            const DenseHead& head, const ForwardOptions& options = {});

}  // namespace fedwing
