// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "fedwing/error.hpp"
#include "fedwing/kernels/kernels.hpp"
#include "fedwing/ops.hpp"
#include "fedwing/rng.hpp"
#include "fedwing/tensor.hpp"
#include "support/oracles.hpp"

using namespace fedwing;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

Tensor rand_leaf(Shape s, Rng& rng) { return Tensor::randn(std::move(s), 1.0, rng, true); }

}  // namespace

TEST_CASE("matmul examples") {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(vals(ops::matmul(eye, m)) == std::vector<double>{1, 2, 3, 4});
  const Tensor r = ops::matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4}));
  CHECK(r.shape() == Shape{1, 1});
  CHECK(r.item() == 11.0);
  CHECK_THROWS_AS(ops::matmul(m, Tensor::zeros({3, 2})), Error);
}

TEST_CASE("gradient of sum(A B) w.r.t. A is ones * B^T") {
  Rng rng(1);
  Tensor a = rand_leaf({3, 4}, rng), b = rand_leaf({4, 5}, rng);
  backward(ops::sum(ops::matmul(a, b)));
  const auto g = a.grad();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t p = 0; p < 4; ++p) {
      double rowsum = 0.0;
      for (std::size_t j = 0; j < 5; ++j) rowsum += b.at(p, j);
      CHECK(g[i * 4 + p] == doctest::Approx(rowsum).epsilon(1e-12));
    }
  std::vector<Tensor> leaves{a, b};
  CHECK(oracle::gradient_check(leaves, [&] { return ops::sum(ops::matmul(a, b)); }) < 1e-6);
}

TEST_CASE("elementwise examples and the no-broadcast rule") {
  const Tensor a = Tensor::from({2}, {1, 2});
  CHECK(vals(ops::mul(a, Tensor::from({2}, {1, 1}))) == std::vector<double>{1, 2});
  CHECK(vals(ops::add(a, Tensor::from({2}, {0, 0}))) == std::vector<double>{1, 2});
  CHECK(vals(ops::mul(Tensor::from({2}, {2, 3}), Tensor::from({2}, {4, 5}))) ==
        std::vector<double>{8, 15});
  CHECK(vals(ops::mul(a, Tensor::scalar(3))) == std::vector<double>{3, 6});
  CHECK_THROWS_AS(ops::add(Tensor::zeros({2, 3}), Tensor::zeros({1, 3})), Error);
  CHECK_THROWS_AS(ops::mul(Tensor::zeros({2}), Tensor::zeros({3})), Error);
}

TEST_CASE("concat and slice") {
  Rng rng(2);
  const Tensor a = Tensor::randn({2, 3}, 1.0, rng), b = Tensor::randn({1, 3}, 1.0, rng);
  const Tensor c = ops::concat({a, b}, 0);
  CHECK(c.shape() == Shape{3, 3});
  CHECK(ops::concat({a, Tensor::zeros({2, 2})}, 1).shape() == Shape{2, 5});
  CHECK(vals(ops::slice(c, 0, 0, 2)) == vals(a));
  const Tensor d = ops::concat({a, Tensor::randn({2, 2}, 1.0, rng)}, 1);
  CHECK(vals(ops::slice(d, 1, 0, 3)) == vals(a));
  CHECK_THROWS_AS(ops::concat({a, Tensor::zeros({2, 2})}, 0), Error);
  CHECK_THROWS_AS(ops::slice(a, 0, 1, 3), Error);
}

TEST_CASE("softmax examples") {
  auto sm = [](std::vector<double> v) { return vals(ops::softmax(Tensor::from({1, v.size()}, v), 1)); };
  auto s0 = sm({0, 0});
  CHECK(s0[0] == doctest::Approx(0.5).epsilon(1e-15));
  auto s1 = sm({1000, 1000});
  CHECK(s1[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::isfinite(s1[1]));
  auto s2 = sm({0, std::log(3.0)});
  CHECK(s2[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(s2[1] == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one on random input (property)") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t r = 1 + rng.uniform_index(6), c = 1 + rng.uniform_index(9);
    const Tensor x = Tensor::randn({r, c}, 10.0, rng);
    const Tensor s = ops::softmax(x, 1);
    for (std::size_t i = 0; i < r; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        CHECK(s.at(i, j) >= 0.0);
        sum += s.at(i, j);
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    const Tensor s0 = ops::softmax(x, 0);
    for (std::size_t j = 0; j < c; ++j) {
      double sum = 0.0;
      for (std::size_t i = 0; i < r; ++i) sum += s0.at(i, j);
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("group norm") {
  const Tensor gamma = Tensor::full({6}, 1.0), beta = Tensor::zeros({6});
  const Tensor constant = Tensor::full({2, 6}, 3.5);
  const Tensor normed = ops::group_norm(constant, 2, gamma, beta);
  for (double v : normed.values()) CHECK(v == 0.0);

  Rng rng(6);
  const Tensor x = Tensor::randn({4, 6}, 2.0, rng);
  // One group: layer normalization over channels, computed directly.
  const Tensor y = ops::group_norm(x, 1, gamma, beta);
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 6; ++c) mean += x.at(r, c) / 6.0;
    for (std::size_t c = 0; c < 6; ++c) var += (x.at(r, c) - mean) * (x.at(r, c) - mean) / 6.0;
    for (std::size_t c = 0; c < 6; ++c)
      CHECK(y.at(r, c) == doctest::Approx((x.at(r, c) - mean) / std::sqrt(var + 1e-5)).epsilon(1e-12));
  }
  const Tensor z = ops::group_norm(x, 3, gamma, beta);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t g = 0; g < 3; ++g) CHECK(std::abs(z.at(r, 2 * g) + z.at(r, 2 * g + 1)) < 1e-7);
  CHECK_THROWS_AS(ops::group_norm(x, 4, gamma, beta), Error);
}

TEST_CASE("scalar derivatives") {
  Tensor x = Tensor::scalar(3.0, true);
  backward(ops::mul(x, x));
  CHECK(x.grad()[0] == 6.0);

  Tensor y = Tensor::scalar(2.0, true);
  const Tensor c = Tensor::scalar(5.0);
  backward(ops::add(ops::mul(y, Tensor::scalar(0.0)), c));
  CHECK(y.grad()[0] == 0.0);
}

TEST_CASE("finite-difference gradients of every differentiable op") {
  Rng rng(7);
  Tensor a = rand_leaf({3, 4}, rng), b = rand_leaf({3, 4}, rng);
  Tensor w = rand_leaf({4, 2}, rng), bias = rand_leaf({2}, rng);
  Tensor row = rand_leaf({1, 4}, rng);
  Tensor gamma = rand_leaf({4}, rng), beta = rand_leaf({4}, rng);
  std::vector<Tensor> leaves{a, b, w, bias, row, gamma, beta};
  auto check = [&](const char* name, const std::function<Tensor()>& f) {
    INFO(name);
    CHECK(oracle::gradient_check(leaves, f) < 1e-6);
  };
  check("add/sub/mul", [&] { return ops::sum(ops::mul(ops::sub(a, b), ops::add(a, b))); });
  check("scale/add_scalar", [&] { return ops::sum(ops::mul(ops::scale(a, 0.3), ops::add_scalar(b, 2.0))); });
  check("sigmoid", [&] { return ops::sum(ops::mul(ops::sigmoid(a), b)); });
  check("relu", [&] { return ops::sum(ops::mul(ops::relu(ops::add_scalar(a, 0.05)), b)); });
  check("abs", [&] { return ops::sum(ops::mul(ops::abs(a), b)); });
  check("linear", [&] { return ops::sum(ops::sigmoid(ops::linear(a, w, bias))); });
  check("transpose/reshape", [&] {
    return ops::sum(ops::mul(ops::reshape(ops::transpose(a), {3, 4}), b));
  });
  check("softmax", [&] { return ops::sum(ops::mul(ops::softmax(a, 1), b)); });
  check("softmax axis 0", [&] { return ops::sum(ops::mul(ops::softmax(a, 0), b)); });
  check("group_norm", [&] { return ops::sum(ops::mul(ops::group_norm(a, 2, gamma, beta), b)); });
  check("normalize_rows", [&] { return ops::sum(ops::mul(ops::normalize_rows(a), b)); });
  check("broadcast/tile", [&] {
    return ops::sum(ops::mul(ops::add(ops::broadcast_rows(row, 3), a), ops::slice(ops::tile_rows(b, 2), 0, 2, 5)));
  });
  check("concat/slice", [&] {
    const Tensor c = ops::concat({a, b}, 1);
    return ops::sum(ops::mul(ops::slice(c, 1, 2, 6), b));
  });
  check("mse/mean", [&] { return ops::add(ops::mse(a, b), ops::mean(ops::mul(a, a))); });
  check("squared_distance", [&] { return ops::squared_distance(a, b); });
  check("cosine_distance", [&] { return ops::cosine_distance(a, b); });
  check("flatten_concat", [&] {
    const Tensor f = ops::flatten_concat({a, row});
    return ops::sum(ops::mul(f, f));
  });
  check("attention", [&] {
    const Tensor q = ops::concat({a, b}, 0);  // batch 2, seq 3, embed 4
    const Tensor k = ops::concat({b, a}, 0);
    return ops::sum(ops::mul(ops::attention(q, k, q, 2, 3, 2), k));
  });
  check("dropout with a fixed stream", [&] {
    Rng r(99);
    return ops::sum(ops::mul(ops::dropout(a, 0.3, true, &r), b));
  });
}

TEST_CASE("dropout: inverted scaling, identity in eval") {
  Rng rng(8);
  const Tensor x = Tensor::full({200, 50}, 1.0);
  CHECK(vals(ops::dropout(x, 0.3, false, nullptr)) == vals(x));
  const Tensor y = ops::dropout(x, 0.3, true, &rng);
  double kept = 0.0, total = 0.0;
  for (double v : y.values()) {
    if (v != 0.0) {
      CHECK(v == doctest::Approx(1.0 / 0.7).epsilon(1e-15));
      kept += 1.0;
    }
    total += v;
  }
  CHECK(kept / 10000.0 == doctest::Approx(0.7).epsilon(0.03));
  CHECK(total / 10000.0 == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("attention matches a per-head reference") {
  Rng rng(9);
  const std::size_t batch = 2, seq = 3, embed = 4, heads = 2, hd = 2;
  const Tensor q = Tensor::randn({batch * seq, embed}, 1.0, rng);
  const Tensor k = Tensor::randn({batch * seq, embed}, 1.0, rng);
  const Tensor v = Tensor::randn({batch * seq, embed}, 1.0, rng);
  const Tensor out = ops::attention(q, k, v, batch, seq, heads);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < seq; ++i) {
        std::vector<double> s(seq);
        double mx = -1e300;
        for (std::size_t j = 0; j < seq; ++j) {
          double d = 0.0;
          for (std::size_t c = 0; c < hd; ++c) d += q.at(b * seq + i, h * hd + c) * k.at(b * seq + j, h * hd + c);
          s[j] = d / std::sqrt(double(hd));
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (auto& x : s) z += (x = std::exp(x - mx));
        for (std::size_t c = 0; c < hd; ++c) {
          double o = 0.0;
          for (std::size_t j = 0; j < seq; ++j) o += s[j] / z * v.at(b * seq + j, h * hd + c);
          CHECK(out.at(b * seq + i, h * hd + c) == doctest::Approx(o).epsilon(1e-12));
        }
      }
}

TEST_CASE("tape rules") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  const Tensor loss = ops::sum(ops::mul(x, x));
  backward(loss);
  CHECK(x.grad() == std::vector<double>{2, 4});
  CHECK_THROWS_AS(backward(loss), Error);
  CHECK_THROWS_AS(backward(ops::mul(x, x)), Error);  // not a scalar

  // Gradients accumulate until cleared.
  backward(ops::sum(x));
  CHECK(x.grad() == std::vector<double>{3, 5});
  x.zero_grad();
  CHECK(x.grad() == std::vector<double>{0, 0});

  {
    NoGradGuard g;
    CHECK_FALSE(grad_enabled());
    const Tensor y = ops::mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(grad_enabled());
}

TEST_CASE("non-finite values are rejected") {
  const Tensor x = Tensor::from({2}, {1.0, 0.0});
  CHECK_THROWS_AS(Tensor::from({1}, {std::nan("")}), Error);
  CHECK_THROWS_AS(ops::scale(Tensor::from({1}, {1e300}), 1e300), Error);
  CHECK_THROWS_AS(Tensor::from({3}, {1, 2}), Error);
  (void)x;
}

TEST_CASE("ops give identical results under scalar and simd kernels") {
  const kernels::Isa before = kernels::active_isa();
  Rng rng(10);
  const Tensor a = Tensor::randn({37, 29}, 1.0, rng), b = Tensor::randn({29, 41}, 1.0, rng);
  auto run = [&] {
    const Tensor m = ops::matmul(a, b);
    return std::pair{vals(m), ops::sum(ops::mul(m, m)).item()};
  };
  kernels::select(kernels::Isa::kScalar);
  const auto ref = run();
  if (kernels::select(kernels::Isa::kAvx2)) {
    const auto simd = run();
    for (std::size_t i = 0; i < ref.first.size(); ++i)
      CHECK(std::abs(ref.first[i] - simd.first[i]) < 1e-11);
    CHECK(simd.second == doctest::Approx(ref.second).epsilon(1e-12));
  }
  kernels::select(before);
}

TEST_CASE("rectifier fingerprint tracks the active set") {
  auto fp = [](std::vector<double> v) {
    ops::reset_relu_fingerprint();
    const std::size_t n = v.size();
    ops::relu(Tensor::from({n}, std::move(v)));
    return ops::relu_fingerprint();
  };
  CHECK(fp({1.0, -2.0, 3.0}) == fp({0.5, -1.0, 7.0}));
  CHECK(fp({1.0, -2.0, 3.0}) != fp({1.0, 2.0, 3.0}));
  CHECK(fp({1.0, -2.0}) != fp({-2.0, 1.0}));
}
