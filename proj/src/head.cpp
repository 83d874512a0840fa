// SPDX-License-Identifier: Apache-2.0
#include "fedwing/head.hpp"

#include <cmath>

#include "fedwing/error.hpp"
#include "fedwing/ops.hpp"
#include "fedwing/rng.hpp"

namespace fedwing {

DenseHead DenseHead::create(std::vector<std::size_t> widths, Rng& rng) {
  if (widths.size() < 2) fail("adaptive-prompts", "head needs at least input and output widths");
  DenseHead h;
  h.widths_ = std::move(widths);
  for (std::size_t i = 0; i + 1 < h.widths_.size(); ++i) {
    const std::size_t in = h.widths_[i], out = h.widths_[i + 1];
    const double stddev = std::sqrt(2.0 / static_cast<double>(in + out));
    h.weights_.push_back(Tensor::randn({in, out}, stddev, rng, true));
    h.biases_.push_back(Tensor::zeros({out}, true));
  }
  return h;
}

DenseHead DenseHead::zeros(std::size_t in, std::size_t out) {
  DenseHead h;
  h.widths_ = {in, out};
  h.weights_.push_back(Tensor::zeros({in, out}, true));
  h.biases_.push_back(Tensor::zeros({out}, true));
  return h;
}

DenseHead DenseHead::identity(std::size_t width) {
  DenseHead h;
  h.widths_ = {width, width};
  std::vector<double> eye(width * width, 0.0);
  for (std::size_t i = 0; i < width; ++i) eye[i * width + i] = 1.0;
  h.weights_.push_back(Tensor::from({width, width}, std::move(eye), true));
  h.biases_.push_back(Tensor::zeros({width}, true));
  return h;
}

Tensor DenseHead::forward(const Tensor& x) const {
  if (weights_.empty()) fail("adaptive-prompts", "head is not initialized");
  Tensor h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    h = ops::linear(h, weights_[i], biases_[i]);
    if (i + 1 < weights_.size()) h = ops::relu(h);
  }
  return h;
}

std::vector<Tensor> DenseHead::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back(weights_[i]);
    out.push_back(biases_[i]);
  }
  return out;
}

std::size_t DenseHead::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters()) n += t.numel();
  return n;
}

DenseHead DenseHead::clone() const {
  DenseHead h;
  h.widths_ = widths_;
  for (const auto& w : weights_) h.weights_.push_back(w.detach(true));
  for (const auto& b : biases_) h.biases_.push_back(b.detach(true));
  return h;
}

std::vector<double> DenseHead::flatten() const {
  std::vector<double> out;
  for (const auto& t : parameters()) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

void DenseHead::assign_flat(std::span<const double> values) {
  if (values.size() != parameter_count()) fail("adaptive-prompts", "flat head vector has the wrong length");
  std::size_t offset = 0;
  for (auto t : parameters()) {
    t.assign(values.subspan(offset, t.numel()));
    offset += t.numel();
  }
}

}  // namespace fedwing
