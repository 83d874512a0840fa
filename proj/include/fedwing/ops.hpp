// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Shapes must match exactly; the only implicit
// broadcast is a rank-0 (scalar) operand in add/sub/mul. Row broadcasting is
// an explicit op (broadcast_rows / tile_rows).
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedwing/tensor.hpp"

namespace fedwing {

class Rng;

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& x);
/// Running hash of every rectifier's active set on this thread since the
/// last reset. Equal fingerprints mean two evaluations took the same linear
/// piece (used by finite-difference checks).
void reset_relu_fingerprint();
std::uint64_t relu_fingerprint();
Tensor sigmoid(const Tensor& x);
Tensor abs(const Tensor& x);

/// Inverted dropout: in training mode kept entries are scaled by 1/(1-p);
/// evaluation mode returns x unchanged.
Tensor dropout(const Tensor& x, double p, bool train, Rng* rng);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);

/// Numerically stable softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

/// x: [rows x channels]. Each row's channels are split into `groups`
/// contiguous groups, each normalized to zero mean / unit variance, then
/// scaled and shifted per channel by gamma/beta ([channels]).
Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
/// Per-row zero mean / unit variance without affine parameters.
Tensor normalize_rows(const Tensor& x, double eps = 1e-5);

/// x[rows x in] * w[in x out] + bias[out] (bias optional).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

/// row[1 x c] -> [rows x c]
Tensor broadcast_rows(const Tensor& row, std::size_t rows);
/// x[r x c] -> [times*r x c], stacking copies of x.
Tensor tile_rows(const Tensor& x, std::size_t times);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse(const Tensor& prediction, const Tensor& target);
/// Squared Euclidean distance between equally sized tensors (flattened).
Tensor squared_distance(const Tensor& a, const Tensor& b);
/// 1 - cos(a, b) over flattened tensors; zero vectors have cosine 0.
Tensor cosine_distance(const Tensor& a, const Tensor& b);
/// Concatenates flattened tensors into one [1 x total] row.
Tensor flatten_concat(const std::vector<Tensor>& parts);

/// Multi-head scaled dot-product attention over packed sequences.
/// q, k, v: [batch*seq x embed]; heads must divide embed.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch,
                 std::size_t seq, std::size_t heads);

}  // namespace ops
}  // namespace fedwing
