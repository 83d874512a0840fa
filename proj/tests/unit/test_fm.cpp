// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "fedwing/error.hpp"
#include "fedwing/fm.hpp"
#include "fedwing/ops.hpp"
#include "fedwing/rng.hpp"
#include "support/oracles.hpp"

using namespace fedwing;

namespace {

FMConfig small_config() {
  FMConfig c = FMConfig::desk(3);
  c.embed_dim = 8;
  c.heads = 2;
  c.ffn_dim = 8;
  c.norm_groups = 2;
  c.max_length = 16;
  return c;
}

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("desk and full configurations") {
  const FMConfig d = FMConfig::desk(4);
  CHECK(d.embed_dim == 64);
  CHECK(d.heads == 4);
  CHECK(d.ffn_dim == 64);
  CHECK(d.layers == 2);
  CHECK(d.input_width() == 8);
  const FMConfig p = FMConfig::full();
  CHECK(p.feature_dim == 12);
  CHECK(p.embed_dim == 256);
  CHECK_NOTHROW(p.validate());
  FMConfig bad = d;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("forward shape and eval determinism") {
  Rng rng(1);
  const FoundationModel fm = FoundationModel::initialize(small_config(), rng);
  const Tensor x = Tensor::randn({2, 7, 3}, 1.0, rng);
  const Tensor y1 = fm.forward(x);
  CHECK(y1.shape() == Shape{2, 7, 3});
  CHECK(vals(fm.forward(x)) == vals(y1));
  // Wider inputs (prompt columns) are accepted up to twice the feature count.
  CHECK(fm.forward(Tensor::randn({1, 5, 6}, 1.0, rng)).shape() == Shape{1, 5, 3});
  CHECK_THROWS_AS(fm.forward(Tensor::randn({1, 5, 7}, 1.0, rng)), Error);
  CHECK_THROWS_AS(fm.forward(Tensor::randn({1, 17, 3}, 1.0, rng)), Error);
}

TEST_CASE("batch items do not leak into each other") {
  Rng rng(2);
  const FoundationModel fm = FoundationModel::initialize(small_config(), rng);
  const Tensor a = Tensor::randn({1, 6, 3}, 1.0, rng), b = Tensor::randn({1, 6, 3}, 1.0, rng);
  const auto ab = vals(fm.forward(ops::concat({a, b}, 0)));
  const auto ba = vals(fm.forward(ops::concat({b, a}, 0)));
  const std::size_t half = ab.size() / 2;
  for (std::size_t i = 0; i < half; ++i) {
    CHECK(ab[i] == doctest::Approx(ba[half + i]).epsilon(1e-13));
    CHECK(ab[half + i] == doctest::Approx(ba[i]).epsilon(1e-13));
  }
}

TEST_CASE("train mode dropout depends on the stream, eval does not") {
  Rng rng(3);
  const FoundationModel fm = FoundationModel::initialize(small_config(), rng);
  const Tensor x = Tensor::randn({2, 5, 3}, 1.0, rng);
  Rng r1(5), r2(5), r3(6);
  const auto t1 = vals(fm.forward(x, {true, &r1}));
  const auto t2 = vals(fm.forward(x, {true, &r2}));
  const auto t3 = vals(fm.forward(x, {true, &r3}));
  CHECK(t1 == t2);
  CHECK(t1 != t3);
}

TEST_CASE("frozen parameters collect no gradient, trainable clones do") {
  Rng rng(4);
  const FoundationModel fm = FoundationModel::initialize(small_config(), rng);
  Tensor x = Tensor::randn({1, 4, 3}, 1.0, rng, true);
  backward(ops::sum(fm.forward(x)));
  CHECK(x.has_grad());
  for (const auto& [name, t] : fm.parameters()) CHECK_FALSE(t.has_grad());

  const FoundationModel trainable = fm.clone(true);
  backward(ops::sum(trainable.forward(x.detach())));
  for (const auto& [name, t] : trainable.parameters()) CHECK(t.requires_grad());
}

TEST_CASE("full model gradients match finite differences") {
  Rng rng(5);
  FMConfig c = small_config();
  c.layers = 1;
  const FoundationModel fm = FoundationModel::initialize(c, rng).clone(true);
  const Tensor x = Tensor::randn({2, 4, 3}, 1.0, rng);
  const Tensor target = Tensor::randn({2, 4, 3}, 1.0, rng);
  std::vector<Tensor> leaves = fm.parameter_tensors();
  const double err = oracle::gradient_check(leaves, [&] { return ops::mse(fm.forward(x), target); });
  CHECK(err < 1e-4);
}

TEST_CASE("parameter overrides replace named arrays") {
  Rng rng(6);
  const FoundationModel fm = FoundationModel::initialize(small_config(), rng);
  const auto names = fm.final_norm_parameter_names();
  REQUIRE(names.size() == 4);
  for (const auto& n : names) CHECK(fm.has_parameter(n));
  const Tensor x = Tensor::randn({1, 4, 3}, 1.0, rng);
  ParameterOverrides same;
  for (const auto& n : names) same[n] = fm.parameter(n).detach();
  CHECK(vals(fm.forward(x, {false, nullptr, &same})) == vals(fm.forward(x)));
  ParameterOverrides changed = same;
  changed[names[0]].mutable_values()[0] += 0.5;
  CHECK(vals(fm.forward(x, {false, nullptr, &changed})) != vals(fm.forward(x)));
}

TEST_CASE("snapshot round trip is exact") {
  Rng rng(7);
  const FoundationModel fm = FoundationModel::initialize(small_config(), rng);
  const auto path = (std::filesystem::temp_directory_path() / "fedwing_unit_fm.snapshot").string();
  fm.save(path);
  const FoundationModel back = FoundationModel::load(path);
  CHECK(back == fm);
  CHECK(back.config() == fm.config());
  for (std::size_t i = 0; i < fm.parameters().size(); ++i) {
    CHECK(fm.parameters()[i].first == back.parameters()[i].first);
    CHECK(vals(fm.parameters()[i].second) == vals(back.parameters()[i].second));
  }
  {
    std::ofstream bad(path, std::ios::binary);
    bad << "not a snapshot";
  }
  CHECK_THROWS_AS(FoundationModel::load(path), Error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(FoundationModel::load(path), Error);
}

TEST_CASE("model averaging") {
  Rng rng(8);
  const FoundationModel a = FoundationModel::initialize(small_config(), rng);
  const FoundationModel b = FoundationModel::initialize(small_config(), rng);
  const FoundationModel same = average_models({&a, &a}, {1.0, 3.0});
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    const auto x = vals(a.parameters()[i].second), y = vals(same.parameters()[i].second);
    for (std::size_t j = 0; j < x.size(); ++j) CHECK(y[j] == doctest::Approx(x[j]).epsilon(1e-15));
  }
  const FoundationModel mix = average_models({&a, &b}, {1.0, 3.0});
  const auto& n0 = a.parameters()[0].first;
  CHECK(mix.parameter(n0).at(0) ==
        doctest::Approx(0.25 * a.parameter(n0).at(0) + 0.75 * b.parameter(n0).at(0)).epsilon(1e-14));
  CHECK_THROWS_AS(average_models({&a, &b}, {0.0, 0.0}), Error);
}
