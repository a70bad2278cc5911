#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "drowsy/common.hpp"
#include "drowsy/tensor.hpp"

namespace drowsy {

/// Handle to a node on a Tape.
struct Value {
  std::uint32_t id = 0;
};

/// Recorded operation graph for reverse-mode differentiation.
///
/// Nodes are appended in execution order, which makes the reverse scan a
/// valid topological order. backward() walks nodes from the loss down,
/// calling each node's pull closure to push its output gradient into its
/// inputs, then releases the node's buffers; leaves keep value and
/// gradient so the optimizer can read them back. Single-use: one
/// backward per tape.
class Tape {
 public:
  using Pull = std::function<void(Tape&, const Tensor& out_grad)>;

  Value leaf(Tensor v, bool needs_grad) {
    return push(std::move(v), needs_grad, true);
  }

  Value make_node(Tensor out, bool needs_grad) {
    return push(std::move(out), needs_grad, false);
  }

  /// Attach the backward closure. The closure may reference its own
  /// node's value; buffers are released only after it runs.
  void set_pull(Value v, Pull pull) {
    if (nodes_[v.id].needs_grad) nodes_[v.id].pull = std::move(pull);
  }

  const Tensor& val(Value v) const { return nodes_[v.id].value; }

  bool needs(Value v) const { return nodes_[v.id].needs_grad; }

  /// Gradient buffer for a node, allocated as zeros on first access.
  Tensor& grad_buf(Value v) {
    Node& n = nodes_[v.id];
    if (!n.has_grad) {
      n.grad = Tensor(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  void accumulate(Value v, const Tensor& g) {
    if (!needs(v)) return;
    Tensor& buf = grad_buf(v);
    check_same_shape(buf, g, "gradient accumulate");
    for (std::size_t i = 0; i < buf.numel(); ++i) buf[i] += g[i];
  }

  /// Gradient of a leaf after backward(). A differentiable leaf the loss
  /// never touched reads as zeros.
  const Tensor& grad(Value v) {
    Node& n = nodes_[v.id];
    if (!n.has_grad) {
      if (!n.needs_grad || n.value.empty())
        throw ValidationError("no gradient recorded for node " + std::to_string(v.id));
      n.grad = Tensor(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  bool has_grad(Value v) const { return nodes_[v.id].has_grad; }

  void backward(Value loss) {
    if (ran_backward_)
      throw ValidationError("backward already ran on this tape");
    ran_backward_ = true;
    Node& top = nodes_[loss.id];
    if (top.value.numel() != 1)
      throw ShapeError("backward requires a scalar loss, got shape " + top.value.shape_str());
    if (!top.needs_grad)
      throw ValidationError("loss does not depend on any differentiable leaf");
    grad_buf(loss).fill(1.0);
    for (std::uint32_t i = loss.id + 1; i > 0; --i) {
      Node& n = nodes_[i - 1];
      if (n.pull && n.has_grad) n.pull(*this, n.grad);
      if (!n.is_leaf) {  // buffers are dead past this point
        n.value = Tensor();
        n.grad = Tensor();
        n.has_grad = false;
        n.pull = nullptr;
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Pull pull;
    bool needs_grad = false;
    bool has_grad = false;
    bool is_leaf = false;
  };

  Value push(Tensor v, bool needs_grad, bool is_leaf) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    n.is_leaf = is_leaf;
    nodes_.push_back(std::move(n));
    return Value{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace drowsy
