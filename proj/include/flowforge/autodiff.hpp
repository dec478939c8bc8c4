// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "flowforge/tensor.hpp"

namespace flowforge {

/// Operator vocabulary of the graph engine. The set is closed: higher-level
/// math (losses, smooth scorers) must compose from these so every backward
/// rule stays exhaustively testable.
enum class OpKind {
  kLeaf,
  kAdd,
  kSub,
  kMul,        // elementwise
  kScale,      // multiply by a compile-time scalar attribute
  kMatMul,     // [m,k]x[k,n] -> [m,n] or [m,k]x[k] -> [m]
  kTanh,
  kRelu,
  kSigmoid,
  kSum,        // full reduction to a scalar
  kMean,       // full reduction to a scalar
  kSquare,
  kLog,        // elementwise natural log, domain x > 0
  kConcatLast, // concatenate along the last axis
  kSliceLast,  // contiguous slice along the last axis
};

std::string_view op_name(OpKind kind);

using NodeId = std::size_t;

/// Reverse-mode tape. Nodes are appended in creation order, so inputs always
/// precede their consumers and the reverse sweep is a simple backwards walk.
/// A graph is confined to one worker; run one graph per thread.
class Graph {
 public:
  struct Node {
    OpKind op = OpKind::kLeaf;
    std::array<NodeId, 2> in{0, 0};
    int arity = 0;
    double attr = 0.0;          // kScale factor
    std::size_t slice_start = 0;
    std::size_t slice_len = 0;  // kSliceLast extent
    Tensor value;
    Tensor grad;                // same shape as value, zero until backward()
    bool needs_grad = false;
    bool trainable = false;
  };

  /// Trainable leaves receive gradients in backward(); constants do not.
  NodeId leaf(Tensor value, bool trainable);
  NodeId constant(Tensor value) { return leaf(std::move(value), false); }

  /// Generic entry point: records one operation and evaluates it eagerly.
  /// Shape mismatches and unknown kinds are rejected with the offending
  /// shapes in the message.
  NodeId apply(OpKind kind, NodeId a);
  NodeId apply(OpKind kind, NodeId a, NodeId b);

  NodeId add(NodeId a, NodeId b) { return apply(OpKind::kAdd, a, b); }
  NodeId sub(NodeId a, NodeId b) { return apply(OpKind::kSub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return apply(OpKind::kMul, a, b); }
  NodeId matmul(NodeId a, NodeId b) { return apply(OpKind::kMatMul, a, b); }
  NodeId tanh(NodeId a) { return apply(OpKind::kTanh, a); }
  NodeId relu(NodeId a) { return apply(OpKind::kRelu, a); }
  NodeId sigmoid(NodeId a) { return apply(OpKind::kSigmoid, a); }
  NodeId sum(NodeId a) { return apply(OpKind::kSum, a); }
  NodeId mean(NodeId a) { return apply(OpKind::kMean, a); }
  NodeId square(NodeId a) { return apply(OpKind::kSquare, a); }
  NodeId log(NodeId a) { return apply(OpKind::kLog, a); }
  NodeId scale(NodeId a, double factor);
  NodeId concat_last(NodeId a, NodeId b) { return apply(OpKind::kConcatLast, a, b); }
  NodeId slice_last(NodeId a, std::size_t start, std::size_t len);

  /// Reverse-mode sweep from a scalar loss. Every reachable trainable leaf
  /// receives its exact gradient; unreachable leaves keep zeros. Rejects
  /// non-scalar losses.
  void backward(NodeId loss);

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  const Tensor& grad(NodeId id) const { return nodes_.at(id).grad; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// Gradients of all trainable leaves, keyed by node id.
  std::unordered_map<NodeId, Tensor> trainable_gradients() const;

 private:
  NodeId push(Node node);
  std::vector<Node> nodes_;
};

/// Worker pool size for large matrix kernels (forward and backward). Each
/// output row is computed into its own slot, so results are bit-identical
/// for every worker count; this only trades wall time.
void set_kernel_workers(std::size_t workers);
std::size_t kernel_workers();

/// Central-difference gradient oracle. `f` must be a deterministic scalar
/// function of the parameter tensor; `analytic` is the gradient under test.
/// Returns max over coordinates of |analytic - numeric| / max(1, |analytic|).
/// Non-finite evaluations of f are rejected.
double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& params,
                         const Tensor& analytic, double step);

}  // namespace flowforge
