// SPDX-License-Identifier: Apache-2.0
#include "fedwing/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>

#include "fedwing/error.hpp"
#include "fedwing/kernels/kernels.hpp"
#include "fedwing/rng.hpp"

namespace fedwing::ops {
namespace {

using detail::make_result;
using detail::Node;

const char* kModule = "tensor";

const kernels::KernelTable& k() { return kernels::active(); }

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    fail(kModule, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                      shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(kModule, std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
  }
}

bool is_scalar(const Tensor& t) { return t.rank() == 0; }

void push(const Tensor& t, std::span<const double> g) {
  if (t.requires_grad()) t.node()->accumulate(g);
}

double sum_of(std::span<const double> g) { return k().sum(g.size(), g.data()); }

// outer / extent / inner decomposition around one axis.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

enum class Binary { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind, const char* op) {
  if (is_scalar(b) && !is_scalar(a)) {
    const double s = b.item();
    std::vector<double> out(a.numel());
    const auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = kind == Binary::kAdd ? av[i] + s : kind == Binary::kSub ? av[i] - s : av[i] * s;
    }
    return make_result(op, a.shape(), std::move(out), {a, b}, [a, b, kind](Node& self) {
      const auto& g = self.grad;
      if (kind == Binary::kMul) {
        const double s = b.item();
        if (a.requires_grad()) {
          std::vector<double> ga(g.size());
          k().scale(g.size(), s, g.data(), ga.data());
          push(a, ga);
        }
        if (b.requires_grad()) {
          const double gb = k().dot(g.size(), g.data(), a.values().data());
          b.node()->accumulate(std::span<const double>(&gb, 1));
        }
      } else {
        push(a, g);
        if (b.requires_grad()) {
          const double gb = (kind == Binary::kAdd ? 1.0 : -1.0) * sum_of(g);
          b.node()->accumulate(std::span<const double>(&gb, 1));
        }
      }
    });
  }
  if (is_scalar(a) && !is_scalar(b)) {
    if (kind == Binary::kSub) return add(scale(b, -1.0), a);
    return binary(b, a, kind, op);
  }
  require_same_shape(a, b, op);
  std::vector<double> out(a.numel());
  const auto av = a.values();
  const auto bv = b.values();
  switch (kind) {
    case Binary::kAdd: k().add(out.size(), av.data(), bv.data(), out.data()); break;
    case Binary::kSub: k().sub(out.size(), av.data(), bv.data(), out.data()); break;
    case Binary::kMul: k().mul(out.size(), av.data(), bv.data(), out.data()); break;
  }
  return make_result(op, a.shape(), std::move(out), {a, b}, [a, b, kind](Node& self) {
    const auto& g = self.grad;
    if (kind == Binary::kMul) {
      std::vector<double> tmp(g.size());
      if (a.requires_grad()) {
        k().mul(g.size(), g.data(), b.values().data(), tmp.data());
        push(a, tmp);
      }
      if (b.requires_grad()) {
        k().mul(g.size(), g.data(), a.values().data(), tmp.data());
        push(b, tmp);
      }
      return;
    }
    push(a, g);
    if (b.requires_grad()) {
      if (kind == Binary::kAdd) {
        push(b, g);
      } else {
        std::vector<double> tmp(g.size());
        k().scale(g.size(), -1.0, g.data(), tmp.data());
        push(b, tmp);
      }
    }
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), kk = a.dim(1), p = b.dim(1);
  if (b.dim(0) != kk) {
    fail(kModule, "matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                      shape_string(b.shape()));
  }
  std::vector<double> out(m * p);
  k().gemm_nn(m, p, kk, a.values().data(), b.values().data(), out.data(), false);
  return make_result("matmul", {m, p}, std::move(out), {a, b}, [a, b, m, kk, p](Node& self) {
    if (a.requires_grad()) {
      std::vector<double> ga(m * kk);
      kernels::gemm(false, true, m, kk, p, self.grad.data(), b.values().data(), ga.data(), false);
      push(a, ga);
    }
    if (b.requires_grad()) {
      std::vector<double> gb(kk * p);
      kernels::gemm(true, false, kk, p, m, a.values().data(), self.grad.data(), gb.data(), false);
      push(b, gb);
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::kMul, "mul"); }

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.numel());
  k().scale(out.size(), s, a.values().data(), out.data());
  return make_result("scale", a.shape(), std::move(out), {a}, [a, s](Node& self) {
    std::vector<double> g(self.grad.size());
    k().scale(g.size(), s, self.grad.data(), g.data());
    push(a, g);
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& x : out) x += s;
  return make_result("add_scalar", a.shape(), std::move(out), {a},
                     [a](Node& self) { push(a, self.grad); });
}

namespace {
thread_local std::uint64_t relu_active_hash = 0;
}

void reset_relu_fingerprint() { relu_active_hash = 0; }
std::uint64_t relu_fingerprint() { return relu_active_hash; }

Tensor relu(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  std::uint64_t h = relu_active_hash;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool on = xv[i] > 0.0;
    out[i] = on ? xv[i] : 0.0;
    h = (h ^ (on ? 0x9e3779b97f4a7c15ULL : 0x632be59bd9b4e019ULL)) * 0x100000001b3ULL;
  }
  relu_active_hash = h;
  return make_result("relu", x.shape(), std::move(out), {x}, [x](Node& self) {
    const auto xv = x.values();
    std::vector<double> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = xv[i] > 0.0 ? self.grad[i] : 0.0;
    push(x, g);
  });
}

Tensor sigmoid(const Tensor& x) {
  const auto xv = x.values();
  auto out = std::make_shared<std::vector<double>>(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    (*out)[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  std::vector<double> result = *out;
  return make_result("sigmoid", x.shape(), std::move(result), {x}, [x, out](Node& self) {
    std::vector<double> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = (*out)[i];
      g[i] = self.grad[i] * s * (1.0 - s);
    }
    push(x, g);
  });
}

Tensor abs(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(xv[i]);
  return make_result("abs", x.shape(), std::move(out), {x}, [x](Node& self) {
    const auto xv = x.values();
    std::vector<double> g(self.grad.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = xv[i] > 0.0 ? self.grad[i] : xv[i] < 0.0 ? -self.grad[i] : 0.0;
    }
    push(x, g);
  });
}

Tensor dropout(const Tensor& x, double p, bool train, Rng* rng) {
  if (p < 0.0 || p >= 1.0) fail(kModule, "dropout probability must lie in [0, 1)");
  if (!train || p == 0.0) return x;
  if (rng == nullptr) fail(kModule, "dropout in training mode needs an rng");
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.numel());
  for (auto& m : *mask) m = rng->uniform() < p ? 0.0 : keep_scale;
  std::vector<double> out(mask->size());
  k().mul(out.size(), x.values().data(), mask->data(), out.data());
  return make_result("dropout", x.shape(), std::move(out), {x}, [x, mask](Node& self) {
    std::vector<double> g(self.grad.size());
    k().mul(g.size(), self.grad.data(), mask->data(), g.data());
    push(x, g);
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    fail(kModule, "reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {x},
                     [x](Node& self) { push(x, self.grad); });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  kernels::transpose(r, c, x.values().data(), out.data());
  return make_result("transpose", {c, r}, std::move(out), {x}, [x, r, c](Node& self) {
    std::vector<double> g(r * c);
    kernels::transpose(c, r, self.grad.data(), g.data());
    push(x, g);
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) fail(kModule, "concat of no tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) fail(kModule, "concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) fail(kModule, "concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        fail(kModule, "concat: incompatible shapes " + shape_string(first) + " and " +
                          shape_string(s));
      }
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit total = split_at(out_shape, axis);
  std::vector<std::size_t> chunk(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) chunk[i] = parts[i].dim(axis) * total.inner;
  const std::size_t row = total.extent * total.inner;
  std::vector<double> out(total.outer * row);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto v = parts[i].values();
    for (std::size_t o = 0; o < total.outer; ++o) {
      std::copy_n(v.data() + o * chunk[i], chunk[i], out.data() + o * row + offset);
    }
    offset += chunk[i];
  }
  return make_result("concat", out_shape, std::move(out), parts,
                     [parts, chunk, row, outer = total.outer](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t i = 0; i < parts.size(); ++i) {
                         if (parts[i].requires_grad()) {
                           std::vector<double> g(outer * chunk[i]);
                           for (std::size_t o = 0; o < outer; ++o) {
                             std::copy_n(self.grad.data() + o * row + offset, chunk[i],
                                         g.data() + o * chunk[i]);
                           }
                           push(parts[i], g);
                         }
                         offset += chunk[i];
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size()) fail(kModule, "slice: axis out of range");
  if (begin >= end || end > s[axis]) {
    fail(kModule, "slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") invalid for " + shape_string(s));
  }
  const AxisSplit in = split_at(s, axis);
  const std::size_t row = in.extent * in.inner;
  const std::size_t width = (end - begin) * in.inner;
  const std::size_t offset = begin * in.inner;
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  std::vector<double> out(in.outer * width);
  const auto v = x.values();
  for (std::size_t o = 0; o < in.outer; ++o) {
    std::copy_n(v.data() + o * row + offset, width, out.data() + o * width);
  }
  return make_result("slice", std::move(out_shape), std::move(out), {x},
                     [x, row, width, offset, outer = in.outer](Node& self) {
                       std::vector<double> g(outer * row, 0.0);
                       for (std::size_t o = 0; o < outer; ++o) {
                         std::copy_n(self.grad.data() + o * width, width, g.data() + o * row + offset);
                       }
                       push(x, g);
                     });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) fail(kModule, "softmax: axis out of range");
  const AxisSplit sp = split_at(s, axis);
  const auto v = x.values();
  auto out = std::make_shared<std::vector<double>>(v.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.extent * sp.inner + in;
      double mx = v[base];
      for (std::size_t e = 1; e < sp.extent; ++e) mx = std::max(mx, v[base + e * sp.inner]);
      double z = 0.0;
      for (std::size_t e = 0; e < sp.extent; ++e) {
        const double ex = std::exp(v[base + e * sp.inner] - mx);
        (*out)[base + e * sp.inner] = ex;
        z += ex;
      }
      for (std::size_t e = 0; e < sp.extent; ++e) (*out)[base + e * sp.inner] /= z;
    }
  }
  std::vector<double> result = *out;
  return make_result("softmax", s, std::move(result), {x}, [x, out, sp](Node& self) {
    std::vector<double> g(out->size());
    for (std::size_t o = 0; o < sp.outer; ++o) {
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.extent * sp.inner + in;
        double d = 0.0;
        for (std::size_t e = 0; e < sp.extent; ++e) {
          const std::size_t i = base + e * sp.inner;
          d += self.grad[i] * (*out)[i];
        }
        for (std::size_t e = 0; e < sp.extent; ++e) {
          const std::size_t i = base + e * sp.inner;
          g[i] = (*out)[i] * (self.grad[i] - d);
        }
      }
    }
    push(x, g);
  });
}

namespace {

struct NormCache {
  std::vector<double> xhat;
  std::vector<double> inv_sigma;  // per (row, group)
};

std::shared_ptr<NormCache> normalize_groups(std::span<const double> v, std::size_t rows,
                                            std::size_t channels, std::size_t groups, double eps) {
  auto cache = std::make_shared<NormCache>();
  cache->xhat.resize(v.size());
  cache->inv_sigma.resize(rows * groups);
  const std::size_t gs = channels / groups;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const double* xs = v.data() + r * channels + gi * gs;
      double mu = 0.0;
      for (std::size_t c = 0; c < gs; ++c) mu += xs[c];
      mu /= static_cast<double>(gs);
      double var = 0.0;
      for (std::size_t c = 0; c < gs; ++c) var += (xs[c] - mu) * (xs[c] - mu);
      var /= static_cast<double>(gs);
      const double inv = 1.0 / std::sqrt(var + eps);
      cache->inv_sigma[r * groups + gi] = inv;
      double* xh = cache->xhat.data() + r * channels + gi * gs;
      for (std::size_t c = 0; c < gs; ++c) xh[c] = (xs[c] - mu) * inv;
    }
  }
  return cache;
}

// dx for normalized groups given d(xhat).
void normalize_backward(const NormCache& cache, std::span<const double> dxhat, std::size_t rows,
                        std::size_t channels, std::size_t groups, std::vector<double>& dx) {
  const std::size_t gs = channels / groups;
  const double inv_n = 1.0 / static_cast<double>(gs);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t base = r * channels + gi * gs;
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t c = 0; c < gs; ++c) {
        mean_d += dxhat[base + c];
        mean_dx += dxhat[base + c] * cache.xhat[base + c];
      }
      mean_d *= inv_n;
      mean_dx *= inv_n;
      const double inv = cache.inv_sigma[r * groups + gi];
      for (std::size_t c = 0; c < gs; ++c) {
        dx[base + c] = inv * (dxhat[base + c] - mean_d - cache.xhat[base + c] * mean_dx);
      }
    }
  }
}

}  // namespace

Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require_rank(x, 2, "group_norm");
  const std::size_t rows = x.dim(0), channels = x.dim(1);
  if (groups == 0 || channels % groups != 0) {
    fail(kModule, "group_norm: " + std::to_string(channels) + " channels not divisible into " +
                      std::to_string(groups) + " groups");
  }
  if (gamma.numel() != channels || beta.numel() != channels) {
    fail(kModule, "group_norm: scale/shift must have one entry per channel");
  }
  auto cache = normalize_groups(x.values(), rows, channels, groups, eps);
  std::vector<double> out(x.numel());
  const auto gv = gamma.values();
  const auto bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      out[r * channels + c] = cache->xhat[r * channels + c] * gv[c] + bv[c];
    }
  }
  return make_result("group_norm", x.shape(), std::move(out), {x, gamma, beta},
                     [x, gamma, beta, cache, rows, channels, groups](Node& self) {
                       const auto& g = self.grad;
                       if (gamma.requires_grad() || beta.requires_grad()) {
                         std::vector<double> gg(channels, 0.0), gb(channels, 0.0);
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t c = 0; c < channels; ++c) {
                             gg[c] += g[r * channels + c] * cache->xhat[r * channels + c];
                             gb[c] += g[r * channels + c];
                           }
                         }
                         push(gamma, gg);
                         push(beta, gb);
                       }
                       if (x.requires_grad()) {
                         const auto gv = gamma.values();
                         std::vector<double> dxhat(g.size());
                         for (std::size_t r = 0; r < rows; ++r) {
                           for (std::size_t c = 0; c < channels; ++c) {
                             dxhat[r * channels + c] = g[r * channels + c] * gv[c];
                           }
                         }
                         std::vector<double> dx(g.size());
                         normalize_backward(*cache, dxhat, rows, channels, groups, dx);
                         push(x, dx);
                       }
                     });
}

Tensor normalize_rows(const Tensor& x, double eps) {
  require_rank(x, 2, "normalize_rows");
  const std::size_t rows = x.dim(0), channels = x.dim(1);
  auto cache = normalize_groups(x.values(), rows, channels, 1, eps);
  std::vector<double> out = cache->xhat;
  return make_result("normalize_rows", x.shape(), std::move(out), {x},
                     [x, cache, rows, channels](Node& self) {
                       std::vector<double> dx(self.grad.size());
                       normalize_backward(*cache, self.grad, rows, channels, 1, dx);
                       push(x, dx);
                     });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const std::size_t rows = x.dim(0), in = x.dim(1), outw = w.dim(1);
  if (w.dim(0) != in) {
    fail(kModule, "linear: input width " + std::to_string(in) + " vs weight " +
                      shape_string(w.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != outw) fail(kModule, "linear: bias width mismatch");
  std::vector<double> out(rows * outw);
  if (has_bias) {
    const auto bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r) std::copy(bv.begin(), bv.end(), out.begin() + r * outw);
  }
  k().gemm_nn(rows, outw, in, x.values().data(), w.values().data(), out.data(), has_bias);
  std::vector<Tensor> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return make_result("linear", {rows, outw}, std::move(out), inputs,
                     [x, w, bias, has_bias, rows, in, outw](Node& self) {
                       const auto& g = self.grad;
                       if (x.requires_grad()) {
                         std::vector<double> gx(rows * in);
                         kernels::gemm(false, true, rows, in, outw, g.data(), w.values().data(),
                                       gx.data(), false);
                         push(x, gx);
                       }
                       if (w.requires_grad()) {
                         std::vector<double> gw(in * outw);
                         kernels::gemm(true, false, in, outw, rows, x.values().data(), g.data(),
                                       gw.data(), false);
                         push(w, gw);
                       }
                       if (has_bias && bias.requires_grad()) {
                         std::vector<double> gb(outw, 0.0);
                         for (std::size_t r = 0; r < rows; ++r) {
                           k().add(outw, gb.data(), g.data() + r * outw, gb.data());
                         }
                         push(bias, gb);
                       }
                     });
}

Tensor broadcast_rows(const Tensor& row, std::size_t rows) {
  require_rank(row, 2, "broadcast_rows");
  if (row.dim(0) != 1) fail(kModule, "broadcast_rows: expected a single row");
  return tile_rows(row, rows);
}

Tensor tile_rows(const Tensor& x, std::size_t times) {
  require_rank(x, 2, "tile_rows");
  if (times == 0) fail(kModule, "tile_rows: zero copies");
  const std::size_t n = x.numel();
  std::vector<double> out(n * times);
  const auto v = x.values();
  for (std::size_t t = 0; t < times; ++t) std::copy(v.begin(), v.end(), out.begin() + t * n);
  return make_result("tile_rows", {x.dim(0) * times, x.dim(1)}, std::move(out), {x},
                     [x, n, times](Node& self) {
                       std::vector<double> g(n, 0.0);
                       for (std::size_t t = 0; t < times; ++t) {
                         k().add(n, g.data(), self.grad.data() + t * n, g.data());
                       }
                       push(x, g);
                     });
}

Tensor sum(const Tensor& x) {
  const double s = sum_of(x.values());
  return make_result("sum", {}, {s}, {x}, [x](Node& self) {
    push(x, std::vector<double>(x.numel(), self.grad[0]));
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  return scale(sum(x), 1.0 / n);
}

Tensor mse(const Tensor& prediction, const Tensor& target) {
  require_same_shape(prediction, target, "mse");
  const std::size_t n = prediction.numel();
  const double value =
      k().squared_distance(n, prediction.values().data(), target.values().data()) / static_cast<double>(n);
  return make_result("mse", {}, {value}, {prediction, target}, [prediction, target, n](Node& self) {
    std::vector<double> diff(n);
    k().sub(n, prediction.values().data(), target.values().data(), diff.data());
    const double c = 2.0 * self.grad[0] / static_cast<double>(n);
    k().scale(n, c, diff.data(), diff.data());
    push(prediction, diff);
    if (target.requires_grad()) {
      k().scale(n, -1.0, diff.data(), diff.data());
      push(target, diff);
    }
  });
}

Tensor squared_distance(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    fail(kModule, "squared_distance: size mismatch " + shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
  }
  const std::size_t n = a.numel();
  const double value = k().squared_distance(n, a.values().data(), b.values().data());
  return make_result("squared_distance", {}, {value}, {a, b}, [a, b, n](Node& self) {
    std::vector<double> diff(n);
    k().sub(n, a.values().data(), b.values().data(), diff.data());
    k().scale(n, 2.0 * self.grad[0], diff.data(), diff.data());
    push(a, diff);
    if (b.requires_grad()) {
      k().scale(n, -1.0, diff.data(), diff.data());
      push(b, diff);
    }
  });
}

Tensor cosine_distance(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) fail(kModule, "cosine_distance: size mismatch");
  const std::size_t n = a.numel();
  const auto av = a.values();
  const auto bv = b.values();
  const double na = std::sqrt(k().dot(n, av.data(), av.data()));
  const double nb = std::sqrt(k().dot(n, bv.data(), bv.data()));
  const bool degenerate = na == 0.0 || nb == 0.0;
  const double cosv = degenerate ? 0.0 : k().dot(n, av.data(), bv.data()) / (na * nb);
  return make_result("cosine_distance", {}, {1.0 - cosv}, {a, b},
                     [a, b, n, na, nb, cosv, degenerate](Node& self) {
                       if (degenerate) return;
                       const auto av = a.values();
                       const auto bv = b.values();
                       const double g = -self.grad[0];
                       if (a.requires_grad()) {
                         std::vector<double> ga(n);
                         for (std::size_t i = 0; i < n; ++i) {
                           ga[i] = g * (bv[i] / (na * nb) - cosv * av[i] / (na * na));
                         }
                         push(a, ga);
                       }
                       if (b.requires_grad()) {
                         std::vector<double> gb(n);
                         for (std::size_t i = 0; i < n; ++i) {
                           gb[i] = g * (av[i] / (na * nb) - cosv * bv[i] / (nb * nb));
                         }
                         push(b, gb);
                       }
                     });
}

Tensor flatten_concat(const std::vector<Tensor>& parts) {
  std::vector<Tensor> rows;
  rows.reserve(parts.size());
  for (const auto& p : parts) rows.push_back(reshape(p, {1, p.numel()}));
  if (rows.size() == 1) return rows.front();
  return concat(rows, 1);
}

}  // namespace fedwing::ops
