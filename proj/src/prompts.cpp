// SPDX-License-Identifier: Apache-2.0
#include "fedwing/prompts.hpp"

#include <cmath>
#include <numbers>

#include "fedwing/error.hpp"
#include "fedwing/ops.hpp"
#include "fedwing/rng.hpp"

namespace fedwing {
namespace {

const char* kModule = "adaptive-prompts";

Tensor fresh(Shape shape, Rng& rng) { return Tensor::randn(std::move(shape), kPromptInitStd, rng, true); }

Tensor with_block(const Tensor& current, Tensor block, std::size_t axis) {
  if (!current.defined()) return block;
  return ops::concat({current.detach(), block}, axis).detach(true);
}

void require_input(const Tensor& x_ipt, const PromptGeometry& g) {
  if (x_ipt.rank() != 2 || x_ipt.dim(1) != g.width) {
    fail(kModule, "x_ipt must be [time x " + std::to_string(g.width) + "], got " +
                      shape_string(x_ipt.shape()));
  }
}

}  // namespace

void GeoEncoding::validate() const {
  if (!(latitude >= -90.0 && latitude <= 90.0)) {
    fail(kModule, "latitude " + std::to_string(latitude) + " outside [-90, 90]");
  }
  if (!(longitude >= -180.0 && longitude <= 180.0)) {
    fail(kModule, "longitude " + std::to_string(longitude) + " outside [-180, 180]");
  }
}

void PromptGeometry::validate() const {
  if (length == 0 || width == 0) fail(kModule, "prompt geometry must be non-empty");
  if (temporal_step == 0 || length % temporal_step != 0) {
    fail(kModule, "prompt length " + std::to_string(length) + " not divisible by temporal step " +
                      std::to_string(temporal_step));
  }
  if (variable_step == 0 || width % variable_step != 0) {
    fail(kModule, "variable count " + std::to_string(width) + " not divisible by variable step " +
                      std::to_string(variable_step));
  }
}

AdaptivePromptSet AdaptivePromptSet::unexpanded(const PromptGeometry& geometry, Rng& rng) {
  geometry.validate();
  AdaptivePromptSet p;
  p.geometry_ = geometry;
  p.spatial = fresh({1, geometry.width}, rng);
  p.temporal_weight = Tensor::full({geometry.length, geometry.width}, kPromptWeightInit, true);
  p.variable_weight = Tensor::full({geometry.length, geometry.width}, kPromptWeightInit, true);
  return p;
}

AdaptivePromptSet AdaptivePromptSet::initialize(const PromptGeometry& geometry, Rng& rng) {
  AdaptivePromptSet p = unexpanded(geometry, rng);
  p.temporal = fresh({geometry.length, geometry.width}, rng);
  p.variable = fresh({geometry.length, geometry.width}, rng);
  return p;
}

bool AdaptivePromptSet::complete() const {
  return temporal_rows() == geometry_.length && variable_columns() == geometry_.width;
}

std::vector<Tensor> AdaptivePromptSet::tensors() const {
  if (!complete()) fail(kModule, "prompt set is not fully grown");
  return {temporal, variable, spatial, temporal_weight, variable_weight};
}

std::size_t AdaptivePromptSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.numel();
  return n;
}

std::vector<double> AdaptivePromptSet::flatten() const {
  std::vector<double> out;
  for (const auto& t : tensors()) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

void AdaptivePromptSet::assign_flat(std::span<const double> values) {
  if (values.size() != parameter_count()) fail(kModule, "flat prompt vector has the wrong length");
  std::size_t offset = 0;
  for (auto& t : {temporal, variable, spatial, temporal_weight, variable_weight}) {
    Tensor target = t;
    target.assign(values.subspan(offset, target.numel()));
    offset += target.numel();
  }
}

AdaptivePromptSet AdaptivePromptSet::clone() const {
  AdaptivePromptSet p;
  p.geometry_ = geometry_;
  auto copy = [](const Tensor& t) { return t.defined() ? t.detach(true) : Tensor(); };
  p.temporal = copy(temporal);
  p.variable = copy(variable);
  p.spatial = copy(spatial);
  p.temporal_weight = copy(temporal_weight);
  p.variable_weight = copy(variable_weight);
  return p;
}

void AdaptivePromptSet::grow_temporal(Rng& rng) {
  if (temporal_rows() + geometry_.temporal_step > geometry_.length) {
    fail(kModule, "temporal prompt already at full length");
  }
  temporal = with_block(temporal, fresh({geometry_.temporal_step, geometry_.width}, rng), 0);
}

void AdaptivePromptSet::grow_variable(Rng& rng) {
  if (variable_columns() + geometry_.variable_step > geometry_.width) {
    fail(kModule, "inter-variable prompt already at full width");
  }
  variable = with_block(variable, fresh({geometry_.length, geometry_.variable_step}, rng), 1);
}

IterationTrace iterate_temporal(const Tensor& x_ipt, AdaptivePromptSet& prompts,
                                const FoundationModel& fm, const ForwardOptions& options, Rng& rng) {
  const auto& g = prompts.geometry();
  g.validate();
  require_input(x_ipt, g);
  IterationTrace trace;
  const std::size_t steps = g.length / g.temporal_step;
  for (std::size_t q = 1; q <= steps; ++q) {
    const std::size_t rows = q * g.temporal_step;
    while (prompts.temporal_rows() < rows) prompts.grow_temporal(rng);
    Tensor input = ops::concat({x_ipt, ops::slice(prompts.temporal, 0, 0, rows)}, 0);
    trace.input_extents.push_back(input.dim(0));
    trace.last_output = fm.forward(ops::reshape(input, {1, input.dim(0), input.dim(1)}), options);
    ++trace.steps;
  }
  return trace;
}

IterationTrace iterate_variable(const Tensor& x_ipt, AdaptivePromptSet& prompts,
                                const FoundationModel& fm, const ForwardOptions& options, Rng& rng) {
  const auto& g = prompts.geometry();
  g.validate();
  require_input(x_ipt, g);
  if (x_ipt.dim(0) != g.length) fail(kModule, "x_ipt length must equal the prompt length");
  IterationTrace trace;
  const std::size_t steps = g.width / g.variable_step;
  for (std::size_t p = 1; p <= steps; ++p) {
    const std::size_t cols = p * g.variable_step;
    while (prompts.variable_columns() < cols) prompts.grow_variable(rng);
    Tensor input = ops::concat({x_ipt, ops::slice(prompts.variable, 1, 0, cols)}, 1);
    trace.input_extents.push_back(input.dim(1));
    trace.last_output = fm.forward(ops::reshape(input, {1, input.dim(0), input.dim(1)}), options);
    ++trace.steps;
  }
  return trace;
}

Tensor combine(const AdaptivePromptSet& prompts) {
  if (!prompts.complete()) fail(kModule, "combine needs fully grown P_T and P_V");
  return ops::add(ops::mul(prompts.temporal, prompts.temporal_weight),
                  ops::mul(prompts.variable, prompts.variable_weight));
}

std::array<std::vector<double>, 2> geo_directions(std::size_t width) {
  std::array<std::vector<double>, 2> dirs{std::vector<double>(width), std::vector<double>(width)};
  const double n = static_cast<double>(width);
  for (std::size_t c = 0; c < width; ++c) {
    const double u = (static_cast<double>(c) + 0.5) / n;
    dirs[0][c] = std::cos(std::numbers::pi * u);
    dirs[1][c] = std::cos(2.0 * std::numbers::pi * u);
  }
  return dirs;
}

SpatialPrompt apply_spatial(const Tensor& combined, const Tensor& spatial, const GeoEncoding& geo) {
  geo.validate();
  if (spatial.rank() != 2 || spatial.dim(0) != 1) {
    fail(kModule, "P_S must be a single row, got " + shape_string(spatial.shape()));
  }
  if (combined.rank() != 2 || combined.dim(1) != spatial.dim(1)) {
    fail(kModule, "X and P_S widths differ");
  }
  const std::size_t width = spatial.dim(1);
  const auto dirs = geo_directions(width);
  std::vector<double> location(width);
  for (std::size_t c = 0; c < width; ++c) {
    location[c] = geo.latitude / 90.0 * dirs[0][c] + geo.longitude / 180.0 * dirs[1][c];
  }
  SpatialPrompt out;
  out.spatial = ops::normalize_rows(ops::add(spatial, Tensor::from({1, width}, std::move(location))),
                                    kSpatialNormEps);
  out.combined = ops::normalize_rows(
      ops::add(combined, ops::broadcast_rows(out.spatial, combined.dim(0))), kSpatialNormEps);
  return out;
}

Tensor forward_with_prompts(const Tensor& x, const AdaptivePromptSet& prompts,
                            const GeoEncoding& geo, const FoundationModel& fm,
                            const DenseHead& head, const ForwardOptions& options) {
  const auto& g = prompts.geometry();
  if (x.rank() != 3 || x.dim(1) != g.length || x.dim(2) != g.width) {
    fail(kModule, "input batch " + shape_string(x.shape()) + " does not match prompt geometry [" +
                      std::to_string(g.length) + "x" + std::to_string(g.width) + "]");
  }
  const std::size_t batch = x.dim(0);
  const SpatialPrompt sp = apply_spatial(combine(prompts), prompts.spatial, geo);
  Tensor rows = ops::add(ops::reshape(x, {batch * g.length, g.width}),
                         ops::tile_rows(sp.combined, batch));
  Tensor y = fm.forward(ops::reshape(rows, {batch, g.length, g.width}), options);
  return head.forward(ops::reshape(y, {batch, g.length * g.width}));
}

}  // namespace fedwing
