// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fedwing/error.hpp"
#include "fedwing/graph_server.hpp"
#include "fedwing/ops.hpp"
#include "fedwing/rng.hpp"
#include "support/oracles.hpp"

using namespace fedwing;

namespace {

std::vector<std::vector<double>> random_rows(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<std::vector<double>> out(n, std::vector<double>(d));
  for (auto& r : out)
    for (auto& x : r) x = rng.normal();
  return out;
}

Matrix random_matrix(std::size_t n, Rng& rng) {
  Matrix m(n);
  for (auto& x : m.v) x = rng.normal();
  return m;
}

Matrix uniform(std::size_t n) { return Matrix(n, 1.0 / double(n)); }

double offdiag_l1(const Matrix& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t j = 0; j < m.n; ++j)
      if (i != j) s += std::abs(m(i, j));
  return s;
}

}  // namespace

TEST_CASE("haversine examples") {
  CHECK(kEarthRadiusKm == 6536.9088);
  CHECK(haversine_km({12.5, 40.0}, {12.5, 40.0}) == 0.0);
  const double quarter = haversine_km({0.0, 0.0}, {0.0, 90.0});
  CHECK(std::abs(quarter / (kEarthRadiusKm * std::numbers::pi / 2) - 1.0) < 1e-9);
  CHECK(quarter == doctest::Approx(10268.1).epsilon(1e-5));
  // antipodes stay finite
  CHECK(std::isfinite(haversine_km({0.0, 0.0}, {0.0, 180.0})));
}

TEST_CASE("haversine agrees with an independent great-circle formula") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double la1 = rng.uniform() * 180 - 90, lo1 = rng.uniform() * 360 - 180;
    const double la2 = rng.uniform() * 180 - 90, lo2 = rng.uniform() * 360 - 180;
    const double h = haversine_km({la1, lo1}, {la2, lo2});
    const double o = oracle::great_circle_km(la1, lo1, la2, lo2, kEarthRadiusKm);
    CHECK(std::abs(h - o) <= 1e-9 * o);
  }
}

TEST_CASE("geographic graphs") {
  const std::vector<GeoEncoding> g = {{30, -100}, {31, -100}, {35, -95}};
  const Matrix d = geo_adjacency(g);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(d(i, i) == 0.0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(d(i, j) == d(j, i));
  }
  const Matrix s = geo_similarity(d);
  std::vector<double> off = {d(0, 1), d(0, 2), d(1, 2)};
  std::sort(off.begin(), off.end());
  CHECK(s(0, 1) == doctest::Approx(std::exp(-d(0, 1) / off[1])).epsilon(1e-14));
  CHECK(s(2, 2) == 1.0);
  const Matrix same = geo_similarity(Matrix(2, 0.0));
  CHECK(same(0, 1) == 1.0);
}

TEST_CASE("cosine graph examples") {
  const Matrix m = cosine_adjacency({{1, 0}, {1, 1}, {0, 3}, {2, 0}, {0, 0}});
  CHECK(m(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(m(0, 2) == 0.0);
  CHECK(m(0, 3) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m(0, 4) == 0.0);
  CHECK(m(4, 4) == 1.0);
  CHECK_THROWS_AS(cosine_adjacency({{1, 0}, {1}}), Error);
}

TEST_CASE("dynamic adjacency") {
  Rng rng(2);
  const Tensor v = Tensor::from({4, 6}, [&] {
    std::vector<double> x(24);
    for (auto& e : x) e = rng.normal();
    return x;
  }());
  DGMParams p = DGMParams::initialize(6, 3, rng);
  SUBCASE("zero score vector halves the similarity logits") {
    for (auto& x : p.score.mutable_values()) x = 0.0;
    const Tensor logits = dynamic_logits(v, p);
    const Tensor e = ops::scale(ops::matmul(ops::matmul(v, p.w_i), ops::transpose(ops::matmul(v, p.w_j))),
                                1.0 / std::sqrt(3.0));
    for (std::size_t i = 0; i < 16; ++i) CHECK(logits.at(i) == doctest::Approx(e.at(i) / 2.0).epsilon(1e-14));
  }
  SUBCASE("identical embeddings also give a factor of one half") {
    p.w_j.assign(p.w_i.values());
    const Tensor logits = dynamic_logits(v, p);
    const Tensor zi = ops::matmul(v, p.w_i);
    const Tensor e = ops::scale(ops::matmul(zi, ops::transpose(zi)), 1.0 / std::sqrt(3.0));
    for (std::size_t i = 0; i < 4; ++i) CHECK(logits.at(i, i) == doctest::Approx(e.at(i, i) / 2.0).epsilon(1e-14));
  }
  SUBCASE("rows sum to one") {
    const Tensor a = dynamic_adjacency(v, p);
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 4; ++j) s += a.at(i, j);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  SUBCASE("gradients match finite differences") {
    std::vector<Tensor> leaves{p.w_i, p.w_j, p.score};
    const Tensor target = Tensor::full({4, 4}, 0.25);
    CHECK(oracle::gradient_check(leaves, [&] { return ops::squared_distance(dynamic_adjacency(v, p), target); }) <
          1e-6);
  }
}

TEST_CASE("graph training") {
  SUBCASE("loss decreases over ten epochs (median of 3 seeds)") {
    std::vector<double> drops;
    for (std::uint64_t seed : {1, 2, 3}) {
      Rng rng(seed);
      const auto vecs = random_rows(5, 8, rng);
      ServerConfig c;
      c.graph_epochs = 10;
      c.graph_lr = 0.05;
      const DGMTraining t = train_dgm(vecs, cosine_adjacency(vecs), c, rng);
      REQUIRE(t.losses.size() == 10);
      drops.push_back(t.losses.front() - t.losses.back());
    }
    std::sort(drops.begin(), drops.end());
    CHECK(drops[1] > 0.0);
  }
  SUBCASE("starting at the target keeps the loss at its floor") {
    // Identical vectors: every logit is equal, A is uniform and matches a
    // uniform target exactly.
    Rng rng(4);
    const std::vector<std::vector<double>> vecs(3, {1.0, -2.0, 0.5});
    ServerConfig c;
    c.graph_epochs = 5;
    const DGMTraining t = train_dgm(vecs, uniform(3), c, rng);
    for (double l : t.losses) CHECK(l < 1e-20);
  }
  SUBCASE("sparsity does not increase off-diagonal mass") {
    std::vector<double> diff;
    for (std::uint64_t seed : {1, 2, 3}) {
      Rng r0(seed);
      const auto vecs = random_rows(5, 8, r0);
      ServerConfig c;
      c.graph_lr = 0.05;
      Rng a(seed + 100), b(seed + 100);
      const double dense = offdiag_l1(train_dgm(vecs, cosine_adjacency(vecs), c, a).adjacency);
      c.sparsity = 0.1;
      const double sparse = offdiag_l1(train_dgm(vecs, cosine_adjacency(vecs), c, b).adjacency);
      diff.push_back(sparse - dense);
    }
    std::sort(diff.begin(), diff.end());
    CHECK(diff[1] <= 0.0);
  }
  CHECK_THROWS_AS(
      [] {
        Rng rng(1);
        train_dgm({{1.0, 2.0}}, Matrix(1, 1.0), ServerConfig{}, rng);
      }(),
      Error);
}

TEST_CASE("attention fusion") {
  Rng rng(6);
  SUBCASE("equal geographic and spatial graphs give uniform attention") {
    const Matrix s = random_matrix(4, rng), tv = random_matrix(4, rng), a = random_matrix(4, rng);
    Matrix att;
    const Matrix f = fuse(s, s, tv, a, &att);
    for (double x : att.v) CHECK(x == doctest::Approx(0.25).epsilon(1e-15));
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        double col_mean = 0.0;
        for (std::size_t k = 0; k < 4; ++k) col_mean += a(k, j) / 4.0;
        CHECK(f(i, j) == doctest::Approx(col_mean).epsilon(1e-13));
      }
  }
  SUBCASE("singleton") {
    const Matrix one(1, 0.7);
    CHECK(fuse(Matrix(1, 0.2), Matrix(1, 0.9), Matrix(1, 1.0), one).v == one.v);
  }
  SUBCASE("softmax factor rows sum to one (property)") {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 2 + rng.uniform_index(6);
      Matrix att;
      fuse(random_matrix(n, rng), random_matrix(n, rng), random_matrix(n, rng), random_matrix(n, rng), &att);
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += att(i, j);
        CHECK(std::abs(s - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("prompt reconstruction") {
  Rng rng(7);
  const auto p = random_rows(3, 5, rng);
  for (double alpha : {0.0, 0.5, 0.99, 1.0})
    CHECK(reconstruct_prompts(p, Matrix::identity(3), Matrix::identity(3), alpha) == p);
  const auto mixed = reconstruct_prompts(p, uniform(3), random_matrix(3, rng), 1.0);
  for (std::size_t k = 0; k < 5; ++k) {
    const double mean = (p[0][k] + p[1][k] + p[2][k]) / 3.0;
    for (std::size_t i = 0; i < 3; ++i) CHECK(mixed[i][k] == doctest::Approx(mean).epsilon(1e-14));
  }
  // alpha blends the two graphs linearly
  const Matrix a = random_matrix(3, rng), f = random_matrix(3, rng);
  const auto r = reconstruct_prompts(p, a, f, 0.3);
  double expect = 0.0;
  for (std::size_t j = 0; j < 3; ++j) expect += (0.3 * a(0, j) + 0.7 * f(0, j)) * p[j][2];
  CHECK(r[0][2] == doctest::Approx(expect).epsilon(1e-13));
  CHECK_THROWS_AS(reconstruct_prompts(p, a, f, 1.5), Error);
}

TEST_CASE("layer mixing") {
  std::vector<ParameterOverrides> layers(2);
  layers[0]["g"] = Tensor::from({2}, {1.0, 3.0});
  layers[1]["g"] = Tensor::from({2}, {3.0, 5.0});
  const auto same = mix_fm_layers(layers, {}, uniform(2), uniform(2), 1.0);
  CHECK(same[0].at("g").at(0) == 1.0);
  const auto id = mix_fm_layers(layers, {"g"}, Matrix::identity(2), Matrix::identity(2), 0.99);
  CHECK(id[1].at("g").at(1) == 5.0);
  const auto avg = mix_fm_layers(layers, {"g"}, uniform(2), Matrix::identity(2), 1.0);
  for (int c = 0; c < 2; ++c) {
    CHECK(avg[c].at("g").at(0) == 2.0);
    CHECK(avg[c].at("g").at(1) == 4.0);
  }
  CHECK(layers[0].at("g").at(0) == 1.0);  // inputs untouched
  CHECK_THROWS_AS(mix_fm_layers(layers, {"missing"}, uniform(2), uniform(2), 1.0), Error);
}

TEST_CASE("global aggregation") {
  CHECK(aggregate_global({{0.0}, {4.0}}, {1, 3})[0] == 3.0);
  CHECK(aggregate_global({{1.5, 2}, {1.5, 2}}, {2, 7}) == std::vector<double>{1.5, 2});
  CHECK(aggregate_global({{0.25, -1}}, {5}) == std::vector<double>{0.25, -1});
  CHECK_THROWS_AS(aggregate_global({{1.0}}, {0}), Error);
  CHECK_THROWS_AS(aggregate_global({{1.0}, {1.0, 2.0}}, {1, 1}), Error);
}

TEST_CASE("full server graph step") {
  Rng rng(8);
  std::vector<AdaptivePromptSet> sets;
  std::vector<GeoEncoding> geos;
  for (int i = 0; i < 4; ++i) {
    sets.push_back(AdaptivePromptSet::initialize({12, 4, 1, 1}, rng));
    geos.push_back({30.0 + i, -100.0 + 2 * i});
  }
  std::vector<double> losses;
  const AdjacencySet g = build_graphs(sets, geos, ServerConfig{}, rng, &losses);
  CHECK(losses.size() == 40);
  for (const Matrix* m : {&g.geo, &g.spatial, &g.temporal_variable, &g.dynamic, &g.fused, &g.attention})
    CHECK(m->n == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    double a = 0.0, s = 0.0, f = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      a += g.dynamic(i, j);
      s += g.attention(i, j);
      f += g.fused(i, j);
    }
    CHECK(std::abs(a - 1.0) < 1e-9);
    CHECK(std::abs(s - 1.0) < 1e-9);
    CHECK(std::abs(f - 1.0) < 1e-9);  // convex mix of stochastic rows
  }
  const AdjacencySet one = build_graphs({sets[0]}, {geos[0]}, ServerConfig{}, rng);
  CHECK(one.dynamic.v == std::vector<double>{1.0});
  CHECK(one.fused.v == std::vector<double>{1.0});
}
