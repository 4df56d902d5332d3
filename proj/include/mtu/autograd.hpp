#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mtu/tensor.hpp"

namespace mtu {

/// Thread-local switch for graph recording. Inference runs under a
/// NoGradGuard so that no intermediate activations outlive their step.
class GradMode {
 public:
  static bool enabled() noexcept;
  static void set_enabled(bool on) noexcept;
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads `grad` of this node and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Handle to a value in the autograd graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T{0});
  }

  /// A new leaf holding a copy of the value, cut off from the graph.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds the output node of an operation. The graph edge is recorded only
/// when grad mode is on and at least one input requires a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, const std::vector<Var<T>>& inputs, std::function<void(Node<T>&)> backward) {
  bool needs_grad = false;
  if (GradMode::enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (needs_grad) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

/// Reverse-mode sweep from a scalar root. Leaf gradients accumulate across
/// calls until they are zeroed.
template <typename T>
void backward(const Var<T>& root);

/// Accumulates `src` into the gradient of parent `index` if it requires one.
template <typename T>
void accumulate_grad(Node<T>& node, std::size_t index, const Tensor<T>& src) {
  auto& parent = node.parents.at(index);
  if (!parent->requires_grad) return;
  auto& g = parent->grad_buffer();
  auto dst = g.data();
  auto s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s[i];
}

}  // namespace mtu
