// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include "flowforge/autodiff.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

#include "flowforge/parallel.hpp"

namespace flowforge {

namespace {
std::atomic<std::size_t> g_kernel_workers{1};
constexpr std::size_t kKernelThreshold = 1u << 23;  // flops below this stay sequential
}  // namespace

void set_kernel_workers(std::size_t workers) { g_kernel_workers.store(workers == 0 ? 1 : workers); }
std::size_t kernel_workers() { return g_kernel_workers.load(); }

namespace {

[[noreturn]] void shape_error(OpKind kind, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(op_name(kind)) + ": shape mismatch " + a.shape_string() + " vs " +
                              b.shape_string());
}

bool is_single(const Tensor& t) { return t.size() == 1; }

// Elementwise binary op with the only broadcast supported: one side may be a
// single-element tensor.
Tensor broadcast_binary(OpKind kind, const Tensor& a, const Tensor& b, double (*op)(double, double)) {
  if (a.same_shape(b)) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i], b[i]);
    return Tensor(a.shape(), std::move(out));
  }
  if (is_single(b)) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = op(a[i], b[0]);
    return Tensor(a.shape(), std::move(out));
  }
  if (is_single(a)) {
    std::vector<double> out(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = op(a[0], b[i]);
    return Tensor(b.shape(), std::move(out));
  }
  shape_error(kind, a, b);
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Adds `delta` into `grad`, summing over the broadcast when grad is a
// single-element tensor that was expanded in the forward pass.
void accumulate_broadcast(Tensor& grad, const std::vector<double>& delta) {
  if (grad.size() == 1) {
    double s = 0.0;
    for (double d : delta) s += d;
    grad[0] += s;
    return;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += delta[i];
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSquare: return "square";
    case OpKind::kLog: return "log";
    case OpKind::kConcatLast: return "concat-last-axis";
    case OpKind::kSliceLast: return "slice-last-axis";
  }
  return "unknown";
}

NodeId Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Graph::leaf(Tensor value, bool trainable) {
  Node node;
  node.op = OpKind::kLeaf;
  node.grad = Tensor::zeros(value.shape());
  node.value = std::move(value);
  node.trainable = trainable;
  node.needs_grad = trainable;
  return push(std::move(node));
}

NodeId Graph::scale(NodeId a, double factor) {
  if (!std::isfinite(factor)) throw std::invalid_argument("scale: non-finite factor");
  const Tensor& va = value(a);
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = factor * va[i];
  Node node;
  node.op = OpKind::kScale;
  node.in = {a, 0};
  node.arity = 1;
  node.attr = factor;
  node.value = Tensor(va.shape(), std::move(out));
  node.grad = Tensor::zeros(va.shape());
  node.needs_grad = nodes_[a].needs_grad;
  return push(std::move(node));
}

NodeId Graph::slice_last(NodeId a, std::size_t start, std::size_t len) {
  const Tensor& va = value(a);
  std::size_t last = va.last_extent();
  if (len == 0 || start + len > last) {
    throw std::invalid_argument("slice-last-axis: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of extent " + std::to_string(last));
  }
  std::size_t outer = va.outer_extent();
  std::vector<double> out(outer * len);
  for (std::size_t r = 0; r < outer; ++r) {
    for (std::size_t c = 0; c < len; ++c) out[r * len + c] = va[r * last + start + c];
  }
  std::vector<std::size_t> shape = va.shape();
  shape.back() = len;
  Node node;
  node.op = OpKind::kSliceLast;
  node.in = {a, 0};
  node.arity = 1;
  node.slice_start = start;
  node.slice_len = len;
  node.value = Tensor(std::move(shape), std::move(out));
  node.grad = Tensor::zeros(node.value.shape());
  node.needs_grad = nodes_[a].needs_grad;
  return push(std::move(node));
}

NodeId Graph::apply(OpKind kind, NodeId a) {
  const Tensor& va = value(a);
  Tensor result;
  switch (kind) {
    case OpKind::kTanh: {
      std::vector<double> out(va.size());
      for (std::size_t i = 0; i < va.size(); ++i) out[i] = std::tanh(va[i]);
      result = Tensor(va.shape(), std::move(out));
      break;
    }
    case OpKind::kRelu: {
      std::vector<double> out(va.size());
      for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i] > 0.0 ? va[i] : 0.0;
      result = Tensor(va.shape(), std::move(out));
      break;
    }
    case OpKind::kSigmoid: {
      std::vector<double> out(va.size());
      for (std::size_t i = 0; i < va.size(); ++i) out[i] = stable_sigmoid(va[i]);
      result = Tensor(va.shape(), std::move(out));
      break;
    }
    case OpKind::kSquare: {
      std::vector<double> out(va.size());
      for (std::size_t i = 0; i < va.size(); ++i) out[i] = va[i] * va[i];
      result = Tensor(va.shape(), std::move(out));
      break;
    }
    case OpKind::kLog: {
      std::vector<double> out(va.size());
      for (std::size_t i = 0; i < va.size(); ++i) {
        if (!(va[i] > 0.0)) throw std::invalid_argument("log: non-positive input");
        out[i] = std::log(va[i]);
      }
      result = Tensor(va.shape(), std::move(out));
      break;
    }
    case OpKind::kSum: {
      double s = 0.0;
      for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
      result = Tensor::scalar(s);
      break;
    }
    case OpKind::kMean: {
      double s = 0.0;
      for (std::size_t i = 0; i < va.size(); ++i) s += va[i];
      result = Tensor::scalar(s / static_cast<double>(va.size()));
      break;
    }
    default:
      throw std::invalid_argument("forward_op: kind " + std::string(op_name(kind)) + " is not unary");
  }
  Node node;
  node.op = kind;
  node.in = {a, 0};
  node.arity = 1;
  node.grad = Tensor::zeros(result.shape());
  node.value = std::move(result);
  node.needs_grad = nodes_[a].needs_grad;
  return push(std::move(node));
}

NodeId Graph::apply(OpKind kind, NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  Tensor result;
  switch (kind) {
    case OpKind::kAdd:
      result = broadcast_binary(kind, va, vb, [](double x, double y) { return x + y; });
      break;
    case OpKind::kSub:
      result = broadcast_binary(kind, va, vb, [](double x, double y) { return x - y; });
      break;
    case OpKind::kMul:
      result = broadcast_binary(kind, va, vb, [](double x, double y) { return x * y; });
      break;
    case OpKind::kMatMul: {
      if (va.rank() != 2 || (vb.rank() != 2 && vb.rank() != 1)) shape_error(kind, va, vb);
      std::size_t m = va.shape()[0];
      std::size_t k = va.shape()[1];
      if (vb.rank() == 2) {
        if (vb.shape()[0] != k) shape_error(kind, va, vb);
        std::size_t n = vb.shape()[1];
        std::vector<double> out(m * n, 0.0);
        std::size_t workers = m * k * n >= kKernelThreshold ? kernel_workers() : 1;
        parallel_for(m, workers, [&](std::size_t i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            double aik = va[i * k + kk];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aik * vb[kk * n + j];
          }
        });
        result = Tensor({m, n}, std::move(out));
      } else {
        if (vb.shape()[0] != k) shape_error(kind, va, vb);
        std::vector<double> out(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          double s = 0.0;
          for (std::size_t kk = 0; kk < k; ++kk) s += va[i * k + kk] * vb[kk];
          out[i] = s;
        }
        result = Tensor({m}, std::move(out));
      }
      break;
    }
    case OpKind::kConcatLast: {
      if (va.rank() != vb.rank()) shape_error(kind, va, vb);
      for (std::size_t i = 0; i + 1 < va.rank(); ++i) {
        if (va.shape()[i] != vb.shape()[i]) shape_error(kind, va, vb);
      }
      std::size_t outer = va.outer_extent();
      std::size_t la = va.last_extent();
      std::size_t lb = vb.last_extent();
      std::vector<double> out(outer * (la + lb));
      for (std::size_t r = 0; r < outer; ++r) {
        for (std::size_t c = 0; c < la; ++c) out[r * (la + lb) + c] = va[r * la + c];
        for (std::size_t c = 0; c < lb; ++c) out[r * (la + lb) + la + c] = vb[r * lb + c];
      }
      std::vector<std::size_t> shape = va.shape();
      shape.back() = la + lb;
      result = Tensor(std::move(shape), std::move(out));
      break;
    }
    default:
      throw std::invalid_argument("forward_op: kind " + std::string(op_name(kind)) + " is not binary");
  }
  Node node;
  node.op = kind;
  node.in = {a, b};
  node.arity = 2;
  node.grad = Tensor::zeros(result.shape());
  node.value = std::move(result);
  node.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(node));
}

void Graph::backward(NodeId loss) {
  if (loss >= nodes_.size()) throw std::invalid_argument("backward: unknown node");
  if (nodes_[loss].value.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + nodes_[loss].value.shape_string());
  }
  for (auto& node : nodes_) {
    for (double& g : node.grad.mutable_data()) g = 0.0;
  }
  nodes_[loss].grad[0] = 1.0;

  for (std::size_t idx = loss + 1; idx-- > 0;) {
    Node& node = nodes_[idx];
    if (node.op == OpKind::kLeaf || !node.needs_grad) continue;
    const Tensor& g = node.grad;
    bool any = false;
    for (double v : g.data()) {
      if (v != 0.0) {
        any = true;
        break;
      }
    }
    if (!any) continue;

    Node& in0 = nodes_[node.in[0]];
    switch (node.op) {
      case OpKind::kAdd: {
        Node& in1 = nodes_[node.in[1]];
        if (in0.needs_grad) accumulate_broadcast(in0.grad, g.data());
        if (in1.needs_grad) accumulate_broadcast(in1.grad, g.data());
        break;
      }
      case OpKind::kSub: {
        Node& in1 = nodes_[node.in[1]];
        if (in0.needs_grad) accumulate_broadcast(in0.grad, g.data());
        if (in1.needs_grad) {
          std::vector<double> neg(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
          accumulate_broadcast(in1.grad, neg);
        }
        break;
      }
      case OpKind::kMul: {
        Node& in1 = nodes_[node.in[1]];
        const Tensor& va = in0.value;
        const Tensor& vb = in1.value;
        if (in0.needs_grad) {
          std::vector<double> d(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * (vb.size() == 1 ? vb[0] : vb[i]);
          accumulate_broadcast(in0.grad, d);
        }
        if (in1.needs_grad) {
          std::vector<double> d(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * (va.size() == 1 ? va[0] : va[i]);
          accumulate_broadcast(in1.grad, d);
        }
        break;
      }
      case OpKind::kScale: {
        if (in0.needs_grad) {
          for (std::size_t i = 0; i < g.size(); ++i) in0.grad[i] += node.attr * g[i];
        }
        break;
      }
      case OpKind::kMatMul: {
        Node& in1 = nodes_[node.in[1]];
        const Tensor& va = in0.value;
        const Tensor& vb = in1.value;
        std::size_t m = va.shape()[0];
        std::size_t k = va.shape()[1];
        if (vb.rank() == 2) {
          std::size_t n = vb.shape()[1];
          std::size_t workers = m * k * n >= kKernelThreshold ? kernel_workers() : 1;
          if (in0.needs_grad) {
            Tensor& grad0 = in0.grad;
            parallel_for(m, workers, [&](std::size_t i) {
              for (std::size_t kk = 0; kk < k; ++kk) {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * vb[kk * n + j];
                grad0[i * k + kk] += s;
              }
            });
          }
          if (in1.needs_grad) {
            Tensor& grad1 = in1.grad;
            parallel_for(k, workers, [&](std::size_t kk) {
              for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < m; ++i) s += va[i * k + kk] * g[i * n + j];
                grad1[kk * n + j] += s;
              }
            });
          }
        } else {
          if (in0.needs_grad) {
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t kk = 0; kk < k; ++kk) in0.grad[i * k + kk] += g[i] * vb[kk];
            }
          }
          if (in1.needs_grad) {
            for (std::size_t kk = 0; kk < k; ++kk) {
              double s = 0.0;
              for (std::size_t i = 0; i < m; ++i) s += va[i * k + kk] * g[i];
              in1.grad[kk] += s;
            }
          }
        }
        break;
      }
      case OpKind::kTanh: {
        if (in0.needs_grad) {
          const Tensor& y = node.value;
          for (std::size_t i = 0; i < g.size(); ++i) in0.grad[i] += g[i] * (1.0 - y[i] * y[i]);
        }
        break;
      }
      case OpKind::kRelu: {
        // Subgradient 0 at the kink.
        if (in0.needs_grad) {
          for (std::size_t i = 0; i < g.size(); ++i) in0.grad[i] += in0.value[i] > 0.0 ? g[i] : 0.0;
        }
        break;
      }
      case OpKind::kSigmoid: {
        if (in0.needs_grad) {
          const Tensor& y = node.value;
          for (std::size_t i = 0; i < g.size(); ++i) in0.grad[i] += g[i] * y[i] * (1.0 - y[i]);
        }
        break;
      }
      case OpKind::kSum: {
        if (in0.needs_grad) {
          for (std::size_t i = 0; i < in0.grad.size(); ++i) in0.grad[i] += g[0];
        }
        break;
      }
      case OpKind::kMean: {
        if (in0.needs_grad) {
          double d = g[0] / static_cast<double>(in0.grad.size());
          for (std::size_t i = 0; i < in0.grad.size(); ++i) in0.grad[i] += d;
        }
        break;
      }
      case OpKind::kSquare: {
        if (in0.needs_grad) {
          for (std::size_t i = 0; i < g.size(); ++i) in0.grad[i] += 2.0 * in0.value[i] * g[i];
        }
        break;
      }
      case OpKind::kLog: {
        if (in0.needs_grad) {
          for (std::size_t i = 0; i < g.size(); ++i) in0.grad[i] += g[i] / in0.value[i];
        }
        break;
      }
      case OpKind::kConcatLast: {
        Node& in1 = nodes_[node.in[1]];
        std::size_t outer = in0.value.outer_extent();
        std::size_t la = in0.value.last_extent();
        std::size_t lb = in1.value.last_extent();
        for (std::size_t r = 0; r < outer; ++r) {
          if (in0.needs_grad) {
            for (std::size_t c = 0; c < la; ++c) in0.grad[r * la + c] += g[r * (la + lb) + c];
          }
          if (in1.needs_grad) {
            for (std::size_t c = 0; c < lb; ++c) in1.grad[r * lb + c] += g[r * (la + lb) + la + c];
          }
        }
        break;
      }
      case OpKind::kSliceLast: {
        if (in0.needs_grad) {
          std::size_t outer = in0.value.outer_extent();
          std::size_t last = in0.value.last_extent();
          for (std::size_t r = 0; r < outer; ++r) {
            for (std::size_t c = 0; c < node.slice_len; ++c) {
              in0.grad[r * last + node.slice_start + c] += g[r * node.slice_len + c];
            }
          }
        }
        break;
      }
      case OpKind::kLeaf:
        break;
    }
  }
}

std::unordered_map<NodeId, Tensor> Graph::trainable_gradients() const {
  std::unordered_map<NodeId, Tensor> out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].trainable) out.emplace(id, nodes_[id].grad);
  }
  return out;
}

double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& params,
                         const Tensor& analytic, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  if (!params.same_shape(analytic)) {
    throw std::invalid_argument("finite_diff_check: gradient shape " + analytic.shape_string() +
                                " does not match parameter shape " + params.shape_string());
  }
  Tensor probe = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double original = probe[i];
    probe[i] = original + step;
    double up = f(probe);
    probe[i] = original - step;
    double down = f(probe);
    probe[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::invalid_argument("finite_diff_check: non-finite function evaluation");
    }
    double numeric = (up - down) / (2.0 * step);
    double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace flowforge
