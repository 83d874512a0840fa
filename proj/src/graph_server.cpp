// SPDX-License-Identifier: Apache-2.0
#include "fedwing/graph_server.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fedwing/error.hpp"
#include "fedwing/ops.hpp"
#include "fedwing/optim.hpp"
#include "fedwing/rng.hpp"

namespace fedwing {
namespace {

const char* kModule = "graph-server";

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

Tensor stack(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) fail(kModule, "no vectors to stack");
  const std::size_t d = rows[0].size();
  std::vector<double> v;
  v.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (r.size() != d) fail(kModule, "vectors differ in length");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor::from({rows.size(), d}, std::move(v));
}

std::vector<double> row_softmax(const std::vector<double>& logits, std::size_t n) {
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0;
    for (std::size_t j = 0; j < n; ++j) total += out[i * n + j] = std::exp(row[j] - mx);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return out;
}

Matrix product(const Matrix& a, const Matrix& b) {
  Matrix c(a.n);
  for (std::size_t i = 0; i < a.n; ++i) {
    for (std::size_t k = 0; k < a.n; ++k) {
      const double s = a(i, k);
      for (std::size_t j = 0; j < a.n; ++j) c(i, j) += s * b(k, j);
    }
  }
  return c;
}

void require_square(const Matrix& m, std::size_t n, const char* what) {
  if (m.n != n || m.v.size() != n * n) {
    fail(kModule, std::string(what) + " must be " + std::to_string(n) + "x" + std::to_string(n));
  }
}

}  // namespace

double haversine_km(const GeoEncoding& a, const GeoEncoding& b, double radius_km) {
  a.validate();
  b.validate();
  const double p1 = radians(a.latitude), p2 = radians(b.latitude);
  const double dphi = p2 - p1;
  const double dl = radians(b.longitude - a.longitude);
  const double s1 = std::sin(dphi / 2.0), s2 = std::sin(dl / 2.0);
  double h = s1 * s1 + std::cos(p1) * std::cos(p2) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0 - 1e-12);
  return 2.0 * radius_km * std::atan(std::sqrt(h / (1.0 - h)));
}

Matrix Matrix::from(const Tensor& t) {
  if (t.rank() != 2 || t.dim(0) != t.dim(1)) fail(kModule, "adjacency tensor must be square");
  Matrix m(t.dim(0));
  std::copy(t.values().begin(), t.values().end(), m.v.begin());
  return m;
}

Matrix Matrix::identity(std::size_t size) {
  Matrix m(size);
  for (std::size_t i = 0; i < size; ++i) m(i, i) = 1.0;
  return m;
}

void ServerConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(kModule, "alpha must lie in [0, 1]");
  if (!(graph_lr > 0.0)) fail(kModule, "graph learning rate must be positive");
  if (sparsity < 0.0) fail(kModule, "sparsity weight must be non-negative");
  if (embed_dim == 0) fail(kModule, "embedding width must be positive");
}

DGMParams DGMParams::initialize(std::size_t input_dim, std::size_t embed_dim, Rng& rng) {
  if (input_dim == 0 || embed_dim == 0) fail(kModule, "DGM dimensions must be positive");
  DGMParams p;
  const double s = 1.0 / std::sqrt(static_cast<double>(input_dim));
  p.w_i = Tensor::randn({input_dim, embed_dim}, s, rng, true);
  p.w_j = Tensor::randn({input_dim, embed_dim}, s, rng, true);
  p.score = Tensor::randn({embed_dim, 1}, 1.0 / std::sqrt(static_cast<double>(embed_dim)), rng, true);
  return p;
}

Matrix geo_adjacency(const std::vector<GeoEncoding>& stations, double radius_km) {
  Matrix m(stations.size());
  for (std::size_t i = 0; i < stations.size(); ++i) {
    for (std::size_t j = i + 1; j < stations.size(); ++j) {
      m(i, j) = m(j, i) = haversine_km(stations[i], stations[j], radius_km);
    }
  }
  return m;
}

Matrix geo_similarity(const Matrix& distances) {
  std::vector<double> off;
  for (std::size_t i = 0; i < distances.n; ++i) {
    for (std::size_t j = i + 1; j < distances.n; ++j) off.push_back(distances(i, j));
  }
  double sigma = 1.0;
  if (!off.empty()) {
    std::sort(off.begin(), off.end());
    const std::size_t k = off.size();
    const double med = k % 2 ? off[k / 2] : 0.5 * (off[k / 2 - 1] + off[k / 2]);
    if (med > 0) sigma = med;
  }
  Matrix s(distances.n);
  for (std::size_t i = 0; i < s.v.size(); ++i) s.v[i] = std::exp(-distances.v[i] / sigma);
  return s;
}

Matrix cosine_adjacency(const std::vector<std::vector<double>>& vectors) {
  const std::size_t n = vectors.size();
  Matrix m(n);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (double x : vectors[i]) s += x * x;
    norms[i] = std::sqrt(s);
    if (vectors[i].size() != vectors[0].size()) fail(kModule, "vectors differ in length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    m(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < vectors[i].size(); ++k) dot += vectors[i][k] * vectors[j][k];
      const double denom = norms[i] * norms[j];
      const double c = denom > 0 ? std::clamp(dot / denom, -1.0, 1.0) : 0.0;
      m(i, j) = m(j, i) = c;
    }
  }
  return m;
}

Tensor dynamic_logits(const Tensor& vectors, const DGMParams& params) {
  if (vectors.rank() != 2 || vectors.dim(1) != params.w_i.dim(0)) {
    fail(kModule, "prompt vectors " + shape_string(vectors.shape()) + " do not match W_i " +
                      shape_string(params.w_i.shape()));
  }
  const std::size_t n = vectors.dim(0);
  const std::size_t d = params.w_i.dim(1);
  Tensor zi = ops::matmul(vectors, params.w_i);
  Tensor zj = ops::matmul(vectors, params.w_j);
  Tensor e = ops::scale(ops::matmul(zi, ops::transpose(zj)), 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor u = ops::matmul(zi, params.score);   // [n x 1]
  Tensor w = ops::matmul(zj, params.score);   // [n x 1]
  const Tensor ones_row = Tensor::full({1, n}, 1.0);
  const Tensor ones_col = Tensor::full({n, 1}, 1.0);
  Tensor s = ops::sub(ops::matmul(u, ones_row), ops::matmul(ones_col, ops::transpose(w)));
  return ops::mul(e, ops::sigmoid(s));
}

Tensor dynamic_adjacency(const Tensor& vectors, const DGMParams& params) {
  return ops::softmax(dynamic_logits(vectors, params), 1);
}

DGMTraining train_dgm(const std::vector<std::vector<double>>& vectors, const Matrix& target,
                      const ServerConfig& config, Rng& rng) {
  config.validate();
  if (vectors.size() < 2) fail(kModule, "graph training needs at least two participants");
  const std::size_t n = vectors.size();
  require_square(target, n, "target graph");
  const Tensor v = stack(vectors);
  DGMTraining out;
  out.params = DGMParams::initialize(v.dim(1), config.embed_dim, rng);
  const Tensor t = target.tensor();
  Matrix off(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) off(i, i) = 0.0;
  const Tensor mask = off.tensor();
  Optimizer opt(OptimizerConfig::gradient_descent(config.graph_lr),
                {out.params.w_i, out.params.w_j, out.params.score});
  for (std::size_t epoch = 0; epoch < config.graph_epochs; ++epoch) {
    try {
      Tensor a = dynamic_adjacency(v, out.params);
      Tensor loss = ops::squared_distance(a, t);
      if (config.sparsity > 0) {
        loss = ops::add(loss, ops::scale(ops::sum(ops::abs(ops::mul(a, mask))), config.sparsity));
      }
      out.losses.push_back(loss.item());
      opt.zero_grad();
      backward(loss);
      opt.step();
    } catch (const Error& e) {
      fail(kModule, "graph training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    for (const auto& p : opt.params()) {
      for (double x : p.values()) {
        if (!std::isfinite(x)) fail(kModule, "graph training diverged at epoch " + std::to_string(epoch));
      }
    }
  }
  NoGradGuard guard;
  out.adjacency = Matrix::from(dynamic_adjacency(v, out.params));
  return out;
}

Matrix fuse(const Matrix& geo_sim, const Matrix& spatial, const Matrix& temporal_variable,
            const Matrix& dynamic, Matrix* attention) {
  const std::size_t n = dynamic.n;
  if (n == 0) fail(kModule, "cannot fuse empty graphs");
  require_square(geo_sim, n, "geographic graph");
  require_square(spatial, n, "spatial graph");
  require_square(temporal_variable, n, "temporal/variable graph");
  Matrix diff(n);
  for (std::size_t i = 0; i < diff.v.size(); ++i) diff.v[i] = geo_sim.v[i] - spatial.v[i];
  Matrix logits(n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < n; ++k) s += diff(i, k) * temporal_variable(j, k);
      logits(i, j) = s * scale;
    }
  }
  Matrix att(n);
  att.v = row_softmax(logits.v, n);
  if (attention) *attention = att;
  return product(att, dynamic);
}

std::vector<std::vector<double>> reconstruct_prompts(const std::vector<std::vector<double>>& prompts,
                                                     const Matrix& dynamic, const Matrix& fused,
                                                     double alpha, std::size_t iterations) {
  const std::size_t n = prompts.size();
  if (n == 0) return {};
  require_square(dynamic, n, "dynamic graph");
  require_square(fused, n, "fused graph");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(kModule, "alpha must lie in [0, 1]");
  const std::size_t d = prompts[0].size();
  for (const auto& p : prompts) {
    if (p.size() != d) fail(kModule, "prompt vectors differ in length");
  }
  std::vector<std::vector<double>> cur = prompts;
  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<std::vector<double>> next(n, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> ap(d, 0.0), fp(d, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        const double a = dynamic(i, j), f = fused(i, j);
        for (std::size_t k = 0; k < d; ++k) {
          ap[k] += a * cur[j][k];
          fp[k] += f * cur[j][k];
        }
      }
      for (std::size_t k = 0; k < d; ++k) next[i][k] = alpha * ap[k] + (1.0 - alpha) * fp[k];
    }
    cur = std::move(next);
  }
  return cur;
}

std::vector<ParameterOverrides> mix_fm_layers(const std::vector<ParameterOverrides>& layers,
                                              const std::vector<std::string>& names,
                                              const Matrix& dynamic, const Matrix& fused,
                                              double alpha, std::size_t iterations) {
  std::vector<ParameterOverrides> out(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (const auto& [name, t] : layers[i]) out[i][name] = t.detach(true);
  }
  for (const auto& name : names) {
    std::vector<std::vector<double>> rows;
    Shape shape;
    for (const auto& client : layers) {
      const auto it = client.find(name);
      if (it == client.end()) fail(kModule, "layer '" + name + "' not found in client upload");
      rows.emplace_back(it->second.values().begin(), it->second.values().end());
      shape = it->second.shape();
    }
    const auto mixed = reconstruct_prompts(rows, dynamic, fused, alpha, iterations);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      out[i][name] = Tensor::from(shape, mixed[i], true);
    }
  }
  return out;
}

std::vector<double> aggregate_global(const std::vector<std::vector<double>>& uploads,
                                     const std::vector<double>& counts) {
  if (uploads.empty()) fail(kModule, "no uploads to aggregate");
  if (uploads.size() != counts.size()) fail(kModule, "upload and sample-count lists differ");
  double total = 0;
  for (double c : counts) {
    if (c < 0) fail(kModule, "negative sample count");
    total += c;
  }
  if (!(total > 0)) fail(kModule, "total sample count is zero");
  const std::size_t d = uploads[0].size();
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < uploads.size(); ++i) {
    if (uploads[i].size() != d) fail(kModule, "uploads differ in length");
    const double w = counts[i] / total;
    for (std::size_t k = 0; k < d; ++k) out[k] += w * uploads[i][k];
  }
  return out;
}

AdjacencySet build_graphs(const std::vector<AdaptivePromptSet>& prompts,
                          const std::vector<GeoEncoding>& geos, const ServerConfig& config,
                          Rng& rng, std::vector<double>* dgm_losses) {
  config.validate();
  const std::size_t n = prompts.size();
  if (n == 0 || geos.size() != n) fail(kModule, "graph construction needs one location per upload");
  std::vector<std::vector<double>> full, tv, sp;
  for (const auto& p : prompts) {
    full.push_back(p.flatten());
    std::vector<double> a(p.temporal.values().begin(), p.temporal.values().end());
    a.insert(a.end(), p.variable.values().begin(), p.variable.values().end());
    tv.push_back(std::move(a));
    sp.emplace_back(p.spatial.values().begin(), p.spatial.values().end());
  }
  AdjacencySet g;
  g.geo = geo_adjacency(geos);
  g.geo_similarity = geo_similarity(g.geo);
  g.spatial = cosine_adjacency(sp);
  g.temporal_variable = cosine_adjacency(tv);
  if (n >= 2) {
    DGMTraining t = train_dgm(full, cosine_adjacency(full), config, rng);
    g.dynamic = std::move(t.adjacency);
    if (dgm_losses) *dgm_losses = std::move(t.losses);
  } else {
    g.dynamic = Matrix::identity(1);
  }
  g.fused = fuse(g.geo_similarity, g.spatial, g.temporal_variable, g.dynamic, &g.attention);
  return g;
}

}  // namespace fedwing
