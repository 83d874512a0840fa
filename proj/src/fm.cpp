// SPDX-License-Identifier: Apache-2.0
#include "fedwing/fm.hpp"

#include <algorithm>
#include <cmath>

#include "fedwing/error.hpp"
#include "fedwing/ops.hpp"
#include "fedwing/rng.hpp"

namespace fedwing {
namespace {

const char* kModule = "transformer-fm";

std::string layer_name(std::size_t l, const std::string& rest) {
  return "layers." + std::to_string(l) + "." + rest;
}

Tensor xavier(std::size_t in, std::size_t out, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in + out));
  return Tensor::randn({in, out}, stddev, rng);
}

}  // namespace

FMConfig FMConfig::desk(std::size_t features) {
  FMConfig c;
  c.feature_dim = features;
  return c;
}

FMConfig FMConfig::full() {
  FMConfig c;
  c.feature_dim = 12;
  c.embed_dim = 256;
  c.heads = 8;
  c.ffn_dim = 256;
  c.dropout = 0.3;
  c.layers = 4;
  c.norm_groups = 8;
  return c;
}

void FMConfig::validate() const {
  if (feature_dim == 0 || embed_dim == 0 || ffn_dim == 0 || layers == 0 || max_length == 0) {
    fail(kModule, "FMConfig dimensions must be positive");
  }
  if (heads == 0 || embed_dim % heads != 0) fail(kModule, "embed_dim must be divisible by heads");
  if (norm_groups == 0 || embed_dim % norm_groups != 0) {
    fail(kModule, "embed_dim must be divisible by norm_groups");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(kModule, "dropout must lie in [0, 1)");
  if (!(norm_eps > 0.0)) fail(kModule, "norm_eps must be positive");
}

void FoundationModel::add_parameter(std::string name, Tensor value) {
  index_[name] = params_.size();
  params_.emplace_back(std::move(name), std::move(value));
}

FoundationModel FoundationModel::initialize(const FMConfig& config, Rng& rng) {
  config.validate();
  FoundationModel m;
  m.config_ = config;
  const std::size_t e = config.embed_dim, f = config.ffn_dim;
  m.add_parameter("input.weight", xavier(config.input_width(), e, rng));
  m.add_parameter("input.bias", Tensor::zeros({e}));
  m.add_parameter("position", Tensor::randn({config.max_length, e}, 0.02, rng));
  for (std::size_t l = 0; l < config.layers; ++l) {
    for (const char* proj : {"attn.q", "attn.k", "attn.v", "attn.out"}) {
      m.add_parameter(layer_name(l, std::string(proj) + ".weight"), xavier(e, e, rng));
      m.add_parameter(layer_name(l, std::string(proj) + ".bias"), Tensor::zeros({e}));
    }
    m.add_parameter(layer_name(l, "norm1.gamma"), Tensor::full({e}, 1.0));
    m.add_parameter(layer_name(l, "norm1.beta"), Tensor::zeros({e}));
    m.add_parameter(layer_name(l, "ffn.w1"), xavier(e, f, rng));
    m.add_parameter(layer_name(l, "ffn.b1"), Tensor::zeros({f}));
    m.add_parameter(layer_name(l, "ffn.w2"), xavier(f, e, rng));
    m.add_parameter(layer_name(l, "ffn.b2"), Tensor::zeros({e}));
    m.add_parameter(layer_name(l, "norm2.gamma"), Tensor::full({e}, 1.0));
    m.add_parameter(layer_name(l, "norm2.beta"), Tensor::zeros({e}));
  }
  m.add_parameter("output.weight", xavier(e, config.feature_dim, rng));
  m.add_parameter("output.bias", Tensor::zeros({config.feature_dim}));
  return m;
}

const Tensor& FoundationModel::parameter(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(kModule, "unknown parameter '" + name + "'");
  return params_[it->second].second;
}

bool FoundationModel::has_parameter(const std::string& name) const { return index_.count(name) > 0; }

std::size_t FoundationModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

const Tensor& FoundationModel::lookup(const std::string& name,
                                      const ParameterOverrides* overrides) const {
  if (overrides != nullptr) {
    auto it = overrides->find(name);
    if (it != overrides->end()) return it->second;
  }
  return parameter(name);
}

Tensor FoundationModel::forward(const Tensor& x, const ForwardOptions& options) const {
  if (x.rank() != 3) fail(kModule, "forward expects [batch x time x width], got " + shape_string(x.shape()));
  const std::size_t batch = x.dim(0), time = x.dim(1), width = x.dim(2);
  if (time > config_.max_length) {
    fail(kModule, "sequence length " + std::to_string(time) + " exceeds positional capacity " +
                      std::to_string(config_.max_length));
  }
  if (width > config_.input_width()) {
    fail(kModule, "input width " + std::to_string(width) + " exceeds " +
                      std::to_string(config_.input_width()));
  }
  const auto* ov = options.overrides;
  auto p = [&](const std::string& name) -> const Tensor& { return lookup(name, ov); };
  const double drop = config_.dropout;
  const bool train = options.train;

  Tensor h = ops::reshape(x, {batch * time, width});
  if (width < config_.input_width()) {
    h = ops::concat({h, Tensor::zeros({batch * time, config_.input_width() - width})}, 1);
  }
  h = ops::linear(h, p("input.weight"), p("input.bias"));
  h = ops::add(h, ops::tile_rows(ops::slice(p("position"), 0, 0, time), batch));
  h = ops::dropout(h, drop, train, options.rng);

  for (std::size_t l = 0; l < config_.layers; ++l) {
    auto name = [l](const char* rest) { return layer_name(l, rest); };
    Tensor q = ops::linear(h, p(name("attn.q.weight")), p(name("attn.q.bias")));
    Tensor k = ops::linear(h, p(name("attn.k.weight")), p(name("attn.k.bias")));
    Tensor v = ops::linear(h, p(name("attn.v.weight")), p(name("attn.v.bias")));
    Tensor a = ops::attention(q, k, v, batch, time, config_.heads);
    a = ops::linear(a, p(name("attn.out.weight")), p(name("attn.out.bias")));
    a = ops::dropout(a, drop, train, options.rng);
    h = ops::group_norm(ops::add(h, a), config_.norm_groups, p(name("norm1.gamma")),
                        p(name("norm1.beta")), config_.norm_eps);
    Tensor f = ops::relu(ops::linear(h, p(name("ffn.w1")), p(name("ffn.b1"))));
    f = ops::dropout(f, drop, train, options.rng);
    f = ops::linear(f, p(name("ffn.w2")), p(name("ffn.b2")));
    f = ops::dropout(f, drop, train, options.rng);
    h = ops::group_norm(ops::add(h, f), config_.norm_groups, p(name("norm2.gamma")),
                        p(name("norm2.beta")), config_.norm_eps);
  }
  Tensor out = ops::linear(h, p("output.weight"), p("output.bias"));
  return ops::reshape(out, {batch, time, config_.feature_dim});
}

FoundationModel FoundationModel::clone(bool requires_grad) const {
  FoundationModel m;
  m.config_ = config_;
  for (const auto& [name, t] : params_) m.add_parameter(name, t.detach(requires_grad));
  return m;
}

std::vector<Tensor> FoundationModel::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(t);
  return out;
}

void FoundationModel::set_parameter_values(const std::string& name, std::span<const double> values) {
  auto it = index_.find(name);
  if (it == index_.end()) fail(kModule, "unknown parameter '" + name + "'");
  params_[it->second].second.assign(values);
}

std::vector<std::string> FoundationModel::final_norm_parameter_names() const {
  const std::size_t l = config_.layers - 1;
  return {layer_name(l, "norm1.gamma"), layer_name(l, "norm1.beta"), layer_name(l, "norm2.gamma"),
          layer_name(l, "norm2.beta")};
}

bool FoundationModel::operator==(const FoundationModel& other) const {
  if (!(config_ == other.config_) || params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& [na, a] = params_[i];
    const auto& [nb, b] = other.params_[i];
    if (na != nb || a.shape() != b.shape()) return false;
    const auto av = a.values();
    const auto bv = b.values();
    if (!std::equal(av.begin(), av.end(), bv.begin())) return false;
  }
  return true;
}

FoundationModel average_models(const std::vector<const FoundationModel*>& models,
                               const std::vector<double>& weights) {
  if (models.empty()) fail(kModule, "cannot average an empty model set");
  if (weights.size() != models.size()) fail(kModule, "one weight per model required");
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) fail(kModule, "model weights must sum to a positive value");
  FoundationModel out = models.front()->clone(false);
  for (const auto& [name, t] : models.front()->parameters()) {
    std::vector<double> acc(t.numel(), 0.0);
    for (std::size_t i = 0; i < models.size(); ++i) {
      const auto v = models[i]->parameter(name).values();
      const double w = weights[i] / total;
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += w * v[j];
    }
    out.set_parameter_values(name, acc);
  }
  return out;
}

}  // namespace fedwing
