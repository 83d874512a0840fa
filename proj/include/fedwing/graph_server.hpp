// SPDX-License-Identifier: Apache-2.0
//
// Server-side graph modelling over participating clients: geographic and
// cosine-similarity graphs, a learned dynamic adjacency, attention fusion,
// and graph-guided mixing of prompts and FM layer copies.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fedwing/prompts.hpp"
#include "fedwing/tensor.hpp"

namespace fedwing {

class Rng;

inline constexpr double kEarthRadiusKm = 6536.9088;

/// Great-circle distance via 2R atan(sqrt(h / (1 - h))).
double haversine_km(const GeoEncoding& a, const GeoEncoding& b, double radius_km = kEarthRadiusKm);

/// Square row-major matrix.
struct Matrix {
  std::size_t n = 0;
  std::vector<double> v;
  Matrix() = default;
  explicit Matrix(std::size_t size, double fill = 0.0) : n(size), v(size * size, fill) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * n + j]; }
  Tensor tensor() const { return Tensor::from({n, n}, v); }
  static Matrix from(const Tensor& t);
  static Matrix identity(std::size_t size);
};

struct AdjacencySet {
  Matrix geo;             // distances, km
  Matrix geo_similarity;  // exp(-d / sigma)
  Matrix spatial;         // cosine graph of P_S
  Matrix temporal_variable;  // cosine graph of [P_T, P_V]
  Matrix dynamic;         // learned A, rows sum to 1
  Matrix fused;           // A'
  Matrix attention;       // softmax factor of A'
};

struct DGMParams {
  Tensor w_i;    // [D x d]
  Tensor w_j;    // [D x d]
  Tensor score;  // [d x 1]
  static DGMParams initialize(std::size_t input_dim, std::size_t embed_dim, Rng& rng);
};

struct ServerConfig {
  double alpha = 0.99;
  std::size_t graph_epochs = 40;
  double graph_lr = 0.001;
  double sparsity = 0.0;  // tau_g
  std::size_t embed_dim = 16;
  std::size_t mix_iterations = 1;
  void validate() const;
};

Matrix geo_adjacency(const std::vector<GeoEncoding>& stations, double radius_km = kEarthRadiusKm);
/// exp(-d / sigma), sigma = median off-diagonal distance (1 when all zero).
Matrix geo_similarity(const Matrix& distances);
/// A[i][j] = cos(v_i, v_j); zero vectors give 0 off the diagonal.
Matrix cosine_adjacency(const std::vector<std::vector<double>>& vectors);

/// Row-softmax of e_ij * sigmoid(w . (z_i - z_j)), e_ij = z_i . z_j / sqrt(d),
/// z_i = v_i W_i, z_j = v_j W_j. Differentiable in the parameters.
Tensor dynamic_adjacency(const Tensor& vectors, const DGMParams& params);
/// The same logits before the softmax (for inspection and tests).
Tensor dynamic_logits(const Tensor& vectors, const DGMParams& params);

struct DGMTraining {
  DGMParams params;
  std::vector<double> losses;  // per epoch, before the update
  Matrix adjacency;            // learned A after training
};

/// Gradient descent on ||A - target||_F^2 + tau_g * sum |offdiag(A)|.
DGMTraining train_dgm(const std::vector<std::vector<double>>& vectors, const Matrix& target,
                      const ServerConfig& config, Rng& rng);

/// A' = softmax((S_geo - A_S) A_TV^T / sqrt(N)) A; `attention` receives the
/// softmax factor when non-null.
Matrix fuse(const Matrix& geo_similarity, const Matrix& spatial, const Matrix& temporal_variable,
            const Matrix& dynamic, Matrix* attention = nullptr);

/// P <- alpha A P + (1 - alpha) A' P, repeated `iterations` times. Rows of
/// `prompts` are clients.
std::vector<std::vector<double>> reconstruct_prompts(const std::vector<std::vector<double>>& prompts,
                                                     const Matrix& dynamic, const Matrix& fused,
                                                     double alpha, std::size_t iterations = 1);

/// Same mixing rule per named layer; every client must hold every name.
std::vector<ParameterOverrides> mix_fm_layers(const std::vector<ParameterOverrides>& layers,
                                              const std::vector<std::string>& names,
                                              const Matrix& dynamic, const Matrix& fused,
                                              double alpha, std::size_t iterations = 1);

/// Sample-count weighted mean.
std::vector<double> aggregate_global(const std::vector<std::vector<double>>& uploads,
                                     const std::vector<double>& counts);

/// Full server step on flattened prompt sets: builds every graph, trains the
/// dynamic adjacency on the full-prompt cosine graph and fuses.
AdjacencySet build_graphs(const std::vector<AdaptivePromptSet>& prompts,
                          const std::vector<GeoEncoding>& geos, const ServerConfig& config,
                          Rng& rng, std::vector<double>* dgm_losses = nullptr);

}  // namespace fedwing
