// SPDX-License-Identifier: Apache-2.0
#include "fedwing/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "fedwing/error.hpp"
#include "fedwing/kernels/kernels.hpp"
#include "fedwing/rng.hpp"

namespace fedwing {
namespace {

thread_local bool t_grad_enabled = true;

const char* kModule = "tensor";

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

void Node::accumulate(std::span<const double> g) {
  auto& buf = grad_buffer();
  kernels::active().add(g.size(), buf.data(), g.data(), buf.data());
}

void Node::accumulate(std::size_t offset, std::span<const double> g) {
  auto& buf = grad_buffer();
  kernels::active().add(g.size(), buf.data() + offset, g.data(), buf.data() + offset);
}

void check_finite(const char* op, std::span<const double> values) {
  if (!kernels::active().all_finite(values.size(), values.data())) {
    fail(kModule, std::string("non-finite value produced by ") + op);
  }
}

Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   const std::vector<Tensor>& inputs, std::function<void(Node&)> rule) {
  check_finite(op, value);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->leaf = false;
  if (t_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (const auto& t : inputs) node->parents.push_back(t.node());
      node->backward = std::move(rule);
    }
  }
  return Tensor::from_node(std::move(node));
}

Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::initializer_list<Tensor> inputs, std::function<void(Node&)> rule) {
  return make_result(op, std::move(shape), std::move(value), std::vector<Tensor>(inputs),
                     std::move(rule));
}

}  // namespace detail

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) fail(kModule, "zero-sized dimension in shape " + shape_string(shape));
  }
  if (values.size() != shape_numel(shape)) {
    fail(kModule, "value count " + std::to_string(values.size()) + " does not match shape " +
                      shape_string(shape));
  }
  detail::check_finite("from", values);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::randn(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return from(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) fail(kModule, "use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) fail(kModule, "axis out of range for shape " + shape_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::values() const {
  if (!node_) fail(kModule, "use of undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) fail(kModule, "item() on non-scalar tensor " + shape_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) fail(kModule, "at(row, col) needs a matrix");
  return node_->value[row * node_->shape[1] + col];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return node_ && node_->leaf; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  if (!node_) fail(kModule, "use of undefined tensor");
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

std::span<double> Tensor::mutable_values() {
  if (!node_) fail(kModule, "use of undefined tensor");
  return node_->value;
}

void Tensor::assign(std::span<const double> values) {
  if (values.size() != numel()) fail(kModule, "assign size mismatch for " + shape_string(shape()));
  detail::check_finite("assign", values);
  std::copy(values.begin(), values.end(), node_->value.begin());
}

Tensor Tensor::detach(bool requires_grad) const {
  return from(shape(), node_->value, requires_grad);
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void backward(const Tensor& root) {
  if (!root.defined()) fail(kModule, "backward on undefined tensor");
  if (root.numel() != 1) fail(kModule, "backward root must be scalar, got " + shape_string(root.shape()));
  auto* root_node = root.node().get();
  if (root_node->released) fail(kModule, "backward called twice on the same record");
  if (!root_node->requires_grad) {
    // Constant root: nothing depends on a parameter, all gradients are zero.
    root_node->released = true;
    return;
  }

  // Iterative post-order DFS yields a topological order (inputs first). The
  // order holds owning pointers: releasing a node's record below drops its
  // references to parents that are processed later.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root_node);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      std::shared_ptr<detail::Node> parent = node->parents[next++];
      if (parent->requires_grad && !visited.count(parent.get())) {
        if (!parent->leaf && parent->released) {
          fail(kModule, "backward through a record already consumed by an earlier pass");
        }
        visited.insert(parent.get());
        stack.emplace_back(std::move(parent), 0);
      }
    } else {
      order.push_back(std::move(node));
      stack.pop_back();
    }
  }

  root_node->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = it->get();
    if (node->leaf) continue;
    if (!node->grad.empty() && node->backward) node->backward(*node);
    node->backward = nullptr;
    node->parents.clear();
    node->grad.clear();
    node->grad.shrink_to_fit();
    node->released = true;
  }
}

}  // namespace fedwing
