#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "hamlearn/tensor.hpp"

namespace hl {

using NodeId = std::uint32_t;

enum class OpKind {
  input,
  constant,
  matmul,
  add,
  hadamard,
  concat,
  tanh_op,
  relu,
  identity,
  scale,
  softmax,
  softmax_cross_entropy,
  mse,
  // plumbing kinds used to wire networks out of flat parameter vectors
  slice,
  reshape,
  transpose,
  dot,
};

/// Reverse-mode autodiff tape. Nodes are appended in evaluation order, so
/// every node's inputs precede it and a reverse sweep visits them in valid
/// adjoint order. One tape per evaluation; tapes are not thread-safe, but
/// distinct tapes on distinct threads are independent.
class Tape {
 public:
  /// Differentiable leaf.
  NodeId input(Tensor value);
  /// Non-differentiated leaf (targets, masks, fixed coefficients).
  NodeId constant(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId concat(const std::vector<NodeId>& parts);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  NodeId identity(NodeId a);
  NodeId scale(NodeId a, double s);
  NodeId softmax(NodeId a);
  /// Scalar loss: -sum(target * log softmax(logits)); matrices reduce by
  /// row mean (mini-batch).
  NodeId softmax_cross_entropy(NodeId logits, NodeId target);
  /// Scalar loss: 0.5 * sum((pred - target)^2); matrices reduce by row mean.
  NodeId mse(NodeId pred, NodeId target);

  NodeId slice(NodeId a, std::size_t offset, std::size_t len);
  NodeId reshape(NodeId a, std::vector<std::size_t> shape);
  NodeId transpose(NodeId a);
  NodeId dot(NodeId a, NodeId b);

  const Tensor& value(NodeId id) const;
  std::size_t node_count() const { return nodes_.size(); }

  /// Adjoints of seed . output(root) for every node reachable from root.
  /// Unseeded / unreachable nodes report zero tensors of their value shape.
  class Gradients {
   public:
    const Tensor& at(NodeId id) const;

   private:
    friend class Tape;
    std::vector<Tensor> adjoints_;
    std::vector<bool> touched_;
    const Tape* tape_ = nullptr;
    mutable std::deque<Tensor> zeros_cache_;  // deque keeps returned references stable
  };

  Gradients backward(NodeId root, const Tensor& seed) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor value;
    double aux = 0.0;               // scale factor
    std::size_t offset = 0, len = 0;  // slice bounds
  };

  NodeId push(Node n);
  std::vector<Node> nodes_;
};

/// Single-op dispatch mirroring the tape methods; `aux` feeds `scale`.
NodeId forward_op(Tape& tape, OpKind op, const std::vector<NodeId>& inputs, double aux = 0.0);

/// Central-difference gradient of a scalar function, the independent oracle
/// every backward pass is checked against.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double step);

}  // namespace hl
