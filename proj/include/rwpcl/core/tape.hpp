#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rwpcl/core/errors.hpp"
#include "rwpcl/core/tensor.hpp"

namespace rwpcl {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& dims() const { return value().dims; }
  std::size_t size() const { return value().size(); }
  T item() const {
    if (size() != 1) throw ContractError("item() on non-scalar " + shape_str(dims()));
    return value().values[0];
  }
};

/// Define-by-run record of one forward pass. Each op appends a node holding its
/// output and a closure that pushes the output gradient into its inputs.
/// A tape supports exactly one backward pass; build a new tape per forward.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var<T> constant(Tensor<T> t) { return push(std::move(t), nullptr, false); }

  /// Trainable leaf owned by the tape (used for gradient checks on free tensors).
  Var<T> variable(Tensor<T> t) { return push(std::move(t), nullptr, grad_enabled_); }

  /// Trainable leaf that references caller-owned storage. The same tensor
  /// registered twice yields the same node, so its gradient accumulates once.
  Var<T> param(const Tensor<T>& t) {
    if (auto it = by_address_.find(&t); it != by_address_.end()) return {this, it->second};
    Var<T> v = push(Tensor<T>{}, &t, grad_enabled_);
    by_address_.emplace(&t, v.id);
    return v;
  }

  /// Appends an op node. `fn` runs during backward only if some input needs a gradient.
  Var<T> record(Tensor<T> out, std::initializer_list<std::size_t> inputs, BackwardFn fn) {
    bool needs = false;
    for (auto i : inputs) needs = needs || nodes_[i].requires_grad;
    Var<T> v = push(std::move(out), nullptr, needs && grad_enabled_);
    if (nodes_[v.id].requires_grad) nodes_[v.id].backward = std::move(fn);
    return v;
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.owned;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient accumulator for node `id`, zero-initialized on first use.
  std::vector<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(value(id).size(), T(0));
    return n.grad;
  }
  const std::vector<T>& grad_of_node(std::size_t id) const { return nodes_[id].grad; }

  void backward(Var<T> loss) {
    if (loss.tape != this) throw ContractError("backward: loss recorded on a different tape");
    if (backward_done_) throw ContractError("backward: graph already consumed; run a new forward pass");
    if (loss.size() != 1)
      throw ContractError("backward: loss must be scalar, got " + shape_str(loss.dims()));
    backward_done_ = true;
    order_.clear();
    if (!nodes_[loss.id].requires_grad) return;
    grad_buffer(loss.id)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      order_.push_back(i);
      n.backward(*this, i);
    }
  }

  bool backward_done() const noexcept { return backward_done_; }

  /// Node ids whose backward closure ran, in visiting order.
  const std::vector<std::size_t>& backward_order() const noexcept { return order_; }

  /// Gradient of a leaf; zeros when the loss does not depend on it.
  Tensor<T> grad(Var<T> v) const {
    if (!backward_done_) throw ContractError("grad: backward has not been run");
    Tensor<T> g(value(v.id).dims, T(0));
    if (!nodes_[v.id].grad.empty()) g.values = nodes_[v.id].grad;
    return g;
  }

  /// Gradient for caller-owned storage registered through param().
  std::vector<T> grad_of(const Tensor<T>& t) const {
    if (!backward_done_) throw ContractError("grad_of: backward has not been run");
    auto it = by_address_.find(&t);
    if (it == by_address_.end() || nodes_[it->second].grad.empty())
      return std::vector<T>(t.size(), T(0));
    return nodes_[it->second].grad;
  }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    std::vector<T> grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var<T> push(Tensor<T> t, const Tensor<T>* ext, bool requires_grad) {
    if (backward_done_) throw ContractError("tape: cannot record after backward");
    Node n;
    n.owned = std::move(t);
    n.external = ext;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<T>*, std::size_t> by_address_;
  std::vector<std::size_t> order_;
  bool grad_enabled_;
  bool backward_done_ = false;
};

}  // namespace rwpcl
