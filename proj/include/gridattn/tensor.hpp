// Copyright 2026 The gridattn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * @file tensor.hpp
 * @brief Dense float64 tensor with define-by-run reverse-mode differentiation.
 *
 * A Tensor is a cheap handle onto a shared node. Operations whose inputs
 * require gradients record their parents and a backward closure on the
 * result; `backward()` walks that record in reverse topological order.
 * Results of operations on constant inputs carry no graph at all.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gridattn/error.hpp"

namespace gridattn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty means absent
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const Node&)> backward;

    void ensure_grad() {
      if (grad.empty()) grad.assign(data.size(), 0.0);
    }
  };

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false) {
    for (std::size_t extent : shape) {
      if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("shape " + shape_str(shape) + " does not match " +
                           std::to_string(data.size()) + " values");
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0, requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  // Direct write access, for parameter initialization and optimizer updates.
  std::span<double> mutable_data() { return node_->data; }
  double item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }
  double operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) {
    node_->requires_grad = value;
    if (!value) node_->grad.clear();
  }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  bool all_finite() const {
    const auto finite = [](double v) { return std::isfinite(v); };
    return std::all_of(node_->data.begin(), node_->data.end(), finite) &&
           std::all_of(node_->grad.begin(), node_->grad.end(), finite);
  }

  // Same values, no graph, no gradient.
  Tensor detach() const { return from_data(shape(), node_->data, false); }

  const char* op_name() const { return node_->op; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// While alive, ops on this thread record no graph. Used for inference.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(enabled()) { enabled() = false; }
  ~NoGradGuard() { enabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool& enabled() {
    thread_local bool grad_enabled = true;
    return grad_enabled;
  }

 private:
  bool previous_;
};

namespace detail {

// Builds an op result. The backward closure is kept only when some parent
// participates in differentiation.
inline Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                          std::vector<Tensor> parents,
                          std::function<void(const Tensor::Node&)> backward) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  const bool any = NoGradGuard::enabled() &&
                   std::any_of(parents.begin(), parents.end(),
                               [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  auto& node = *out.node();
  node.op = op;
  if (any) {
    node.requires_grad = true;
    for (const Tensor& p : parents) node.parents.push_back(p.node());
    node.backward = std::move(backward);
  }
  return out;
}

// Parent gradient buffer if that parent is differentiable, else nullptr.
inline double* grad_sink(const Tensor::Node& self, std::size_t parent) {
  const auto& p = self.parents[parent];
  if (!p || !p->requires_grad) return nullptr;
  p->ensure_grad();
  return p->grad.data();
}

inline void require_shape(const Tensor& t, std::size_t ndim, const char* what) {
  if (t.ndim() != ndim) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(ndim) +
                         "-d tensor, got " + shape_str(t.shape()));
  }
}

}  // namespace detail

// Nodes reachable from `root` that take part in differentiation, ordered so
// that every node follows all of its inputs.
inline std::vector<Tensor::Node*> topological_order(const Tensor& root) {
  std::vector<Tensor::Node*> order;
  std::unordered_set<Tensor::Node*> visited;
  std::vector<std::pair<Tensor::Node*, std::size_t>> stack;
  if (!root.defined() || !root.requires_grad()) return order;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Tensor::Node* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

// Accumulates d(loss)/d(x) into every differentiable tensor reachable from loss.
inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::logic_error("backward() requires a scalar loss, got " +
                           (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) throw std::logic_error("backward() on a loss with no graph");
  const auto order = topological_order(loss);
  // Interior gradients are per-pass; only leaves accumulate across calls.
  for (Tensor::Node* node : order) {
    if (node->backward) node->grad.assign(node->data.size(), 0.0);
  }
  auto& root = *loss.node();
  root.ensure_grad();
  root.grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Tensor::Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

}  // namespace gridattn
