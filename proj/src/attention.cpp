// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <memory>

#include "fedwing/error.hpp"
#include "fedwing/kernels/kernels.hpp"
#include "fedwing/ops.hpp"

namespace fedwing::ops {

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch,
                 std::size_t seq, std::size_t heads) {
  if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape()) {
    fail("tensor", "attention: q, k, v must be equally shaped matrices");
  }
  const std::size_t embed = q.dim(1);
  if (q.dim(0) != batch * seq) fail("tensor", "attention: rows must equal batch * seq");
  if (heads == 0 || embed % heads != 0) fail("tensor", "attention: heads must divide embed width");
  const std::size_t dh = embed / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& kt = kernels::active();

  const auto qv = q.values();
  const auto kv = k.values();
  const auto vv = v.values();
  // probs[b][h][i][j]
  auto probs = std::make_shared<std::vector<double>>(batch * heads * seq * seq);
  std::vector<double> out(batch * seq * embed, 0.0);
  std::vector<double> qh(seq * dh), kh(seq * dh), vh(seq * dh);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t t = 0; t < seq; ++t) {
        const std::size_t src = (b * seq + t) * embed + h * dh;
        std::copy_n(qv.data() + src, dh, qh.data() + t * dh);
        std::copy_n(kv.data() + src, dh, kh.data() + t * dh);
        std::copy_n(vv.data() + src, dh, vh.data() + t * dh);
      }
      double* p = probs->data() + (b * heads + h) * seq * seq;
      for (std::size_t i = 0; i < seq; ++i) {
        double* prow = p + i * seq;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < seq; ++j) {
          prow[j] = kt.dot(dh, qh.data() + i * dh, kh.data() + j * dh) * inv_sqrt;
          mx = std::max(mx, prow[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < seq; ++j) {
          prow[j] = std::exp(prow[j] - mx);
          z += prow[j];
        }
        const double inv_z = 1.0 / z;
        for (std::size_t j = 0; j < seq; ++j) prow[j] *= inv_z;
        double* orow = out.data() + (b * seq + i) * embed + h * dh;
        for (std::size_t j = 0; j < seq; ++j) kt.axpy(dh, prow[j], vh.data() + j * dh, orow);
      }
    }
  }

  return detail::make_result(
      "attention", {batch * seq, embed}, std::move(out), {q, k, v},
      [q, k, v, probs, batch, seq, heads, embed, dh, inv_sqrt](detail::Node& self) {
        const auto& kt = kernels::active();
        const auto qv = q.values();
        const auto kv = k.values();
        const auto vv = v.values();
        const auto& g = self.grad;
        std::vector<double> gq(qv.size(), 0.0), gk(kv.size(), 0.0), gv(vv.size(), 0.0);
        std::vector<double> dp(seq * seq);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const double* p = probs->data() + (b * heads + h) * seq * seq;
            auto at = [&](std::size_t t) { return (b * seq + t) * embed + h * dh; };
            for (std::size_t i = 0; i < seq; ++i) {
              const double* go = g.data() + at(i);
              for (std::size_t j = 0; j < seq; ++j) {
                dp[i * seq + j] = kt.dot(dh, go, vv.data() + at(j));
                kt.axpy(dh, p[i * seq + j], go, gv.data() + at(j));
              }
            }
            for (std::size_t i = 0; i < seq; ++i) {
              double d = 0.0;
              for (std::size_t j = 0; j < seq; ++j) d += dp[i * seq + j] * p[i * seq + j];
              for (std::size_t j = 0; j < seq; ++j) {
                const double ds = p[i * seq + j] * (dp[i * seq + j] - d) * inv_sqrt;
                kt.axpy(dh, ds, kv.data() + at(j), gq.data() + at(i));
                kt.axpy(dh, ds, qv.data() + at(i), gk.data() + at(j));
              }
            }
          }
        }
        if (q.requires_grad()) q.node()->accumulate(gq);
        if (k.requires_grad()) k.node()->accumulate(gk);
        if (v.requires_grad()) v.node()->accumulate(gv);
      });
}

}  // namespace fedwing::ops
