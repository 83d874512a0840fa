// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedwing/tensor.hpp"

namespace fedwing {

class Rng;

/// Fully connected stack applied to flattened per-sample FM output.
/// widths = {in, out} is a single linear map; longer lists insert ReLU
/// hidden layers.
class DenseHead {
 public:
  DenseHead() = default;
  static DenseHead create(std::vector<std::size_t> widths, Rng& rng);
  /// Single linear layer with zero weight and bias (predicts zero).
  static DenseHead zeros(std::size_t in, std::size_t out);
  /// Square single-layer head with an identity weight and zero bias.
  static DenseHead identity(std::size_t width);

  /// x: [batch x in] -> [batch x out]
  Tensor forward(const Tensor& x) const;

  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  const std::vector<std::size_t>& widths() const { return widths_; }
  DenseHead clone() const;
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> values);

 private:
  std::vector<std::size_t> widths_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

}  // namespace fedwing
