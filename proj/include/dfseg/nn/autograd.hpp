#pragma once

#include "dfseg/nn/tensor.hpp"

#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

namespace dfseg::nn {

// Reverse-mode tape. Every op returns a fresh node that remembers its parents
// and a closure pushing its gradient back to them. Nodes are only linked when
// some parent requires a gradient, so inference builds no graph at all.

template <typename Scalar>
struct Node {
  using Array = typename Tensor<Scalar>::Array;

  Tensor<Scalar> value;
  Array grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Array& grad_buffer() {
    if (grad.size() != value.data.size()) grad = Array::Zero(value.data.size());
    return grad;
  }
};

namespace detail {
inline thread_local bool grad_enabled = true;
}

/// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Scalar>
class Var {
 public:
  using NodeType = Node<Scalar>;
  using NodePtr = std::shared_ptr<NodeType>;
  using Array = typename Tensor<Scalar>::Array;

  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false)
      : node_(std::make_shared<NodeType>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var from_node(NodePtr node) {
    Var v;
    v.node_ = std::move(node);
    return v;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  bool requires_grad() const { return node_->requires_grad; }
  const NodePtr& node() const { return node_; }

  bool has_grad() const { return node_->grad.size() == node_->value.data.size(); }
  const Array& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.resize(0); }

  Scalar item() const { return node_->value.data[0]; }

  Var detach() const { return Var(node_->value, false); }

  /// Accumulates d(this)/d(leaf) into every reachable leaf that requires a
  /// gradient. `this` must hold a single element.
  void backward() const {
    if (node_->value.data.size() != 1) throw std::logic_error("backward() needs a scalar root");
    if (!node_->requires_grad) return;

    std::vector<NodeType*> order;
    std::unordered_set<NodeType*> seen;
    std::vector<std::pair<NodeType*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        NodeType* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }

    node_->grad_buffer().setOnes();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      NodeType* n = *it;
      if (!n->backward_fn) continue;
      if (n->grad.size() == n->value.data.size()) n->backward_fn(*n);
      // Interior gradients are not needed once propagated.
      if (n != node_.get()) n->grad.resize(0);
    }
  }

 private:
  NodePtr node_;
};

/// Wraps an op result. `fn` receives the result node (its `grad` is filled)
/// and must accumulate into each parent that requires a gradient.
template <typename Scalar>
Var<Scalar> make_op(Tensor<Scalar> value, std::vector<std::shared_ptr<Node<Scalar>>> parents,
                    std::function<void(Node<Scalar>&)> fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  bool needs = false;
  if (detail::grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  node->requires_grad = needs;
  if (needs) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Var<Scalar>::from_node(std::move(node));
}

}  // namespace dfseg::nn
