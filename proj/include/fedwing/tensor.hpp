// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors of doubles with reverse-mode differentiation.
// A Tensor is a shared handle; results of operations remember how to push
// gradients back to their inputs. backward() walks that record once.
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fedwing {

class Rng;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows in
  bool requires_grad = false;
  bool leaf = true;
  bool released = false;  // backward already consumed this node's record
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node& self)> backward;

  void accumulate(std::span<const double> g);
  void accumulate(std::size_t offset, std::span<const double> g);
  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, double stddev, Rng& rng, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  double item() const;
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  /// Gradient of the last backward pass; zeros if none arrived.
  std::vector<double> grad() const;
  void zero_grad();

  /// In-place access for parameter updates (optimizers, loading, server
  /// mixing). Never use on a tensor that is part of a live graph.
  std::span<double> mutable_values();
  void assign(std::span<const double> values);

  /// Fresh leaf with copied values.
  Tensor detach(bool requires_grad = false) const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Runs reverse accumulation from a scalar root. Leaves with requires_grad
/// receive (accumulated) gradients; intermediate records are released, so a
/// second call over the same record is an error.
void backward(const Tensor& root);

/// True while gradient recording is enabled on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Builds an op result. When recording is enabled and any input requires a
/// gradient, the result keeps `inputs` and `rule`; otherwise it is a plain
/// constant. Values are checked for NaN/Inf.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::initializer_list<Tensor> inputs, std::function<void(Node&)> rule);
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   const std::vector<Tensor>& inputs, std::function<void(Node&)> rule);

void check_finite(const char* op, std::span<const double> values);

}  // namespace detail

}  // namespace fedwing
