// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
//
// The finite-difference oracle is the reference here: every backward rule is
// held against central differences before anything downstream trusts it.
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <limits>
#include <functional>

#include "flowforge/autodiff.hpp"
#include "flowforge/rng.hpp"

using namespace flowforge;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0, double hi = 1.0) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  std::vector<double> data(n);
  for (double& v : data) v = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

TEST_CASE("finite_diff_check oracle behaves on closed forms") {
  // Sum of squares: analytic gradient 2w.
  Tensor at = Tensor::vector({1.0, 2.0});
  auto sum_sq = [](const Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * w[i];
    return s;
  };
  CHECK(finite_diff_check(sum_sq, at, Tensor::vector({2.0, 4.0}), 1e-5) < 1e-8);

  // Constant function: both gradients are exactly zero.
  auto constant = [](const Tensor&) { return 3.5; };
  CHECK(finite_diff_check(constant, at, Tensor::vector({0.0, 0.0}), 1e-5) == 0.0);

  // Linear form: central differences are exact up to rounding.
  auto linear = [](const Tensor& w) { return 2.0 * w[0] - 0.5 * w[1]; };
  CHECK(finite_diff_check(linear, at, Tensor::vector({2.0, -0.5}), 1e-5) < 1e-10);

  auto bad = [](const Tensor&) { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(finite_diff_check(bad, at, Tensor::vector({0.0, 0.0}), 1e-5), std::invalid_argument);
  CHECK_THROWS_AS(finite_diff_check(sum_sq, at, Tensor::vector({2.0, 4.0}), 0.0), std::invalid_argument);
}

TEST_CASE("forward op spot values") {
  Graph g;
  NodeId a = g.constant(Tensor::vector({1.0, 2.0}));
  NodeId b = g.constant(Tensor::vector({3.0, 4.0}));
  CHECK(g.value(g.add(a, b)).data() == std::vector<double>{4.0, 6.0});

  NodeId m1 = g.constant(Tensor({1, 2}, {1.0, 2.0}));
  NodeId m2 = g.constant(Tensor({2, 1}, {3.0, 4.0}));
  CHECK(g.value(g.matmul(m1, m2)).data() == std::vector<double>{11.0});

  CHECK(g.value(g.tanh(g.constant(Tensor::vector({0.0}))))[0] == 0.0);
  CHECK(g.value(g.mean(g.constant(Tensor::vector({1.0, 3.0}))))[0] == 2.0);
  CHECK(g.value(g.slice_last(g.constant(Tensor::vector({5.0, 6.0, 7.0})), 1, 2)).data() ==
        std::vector<double>{6.0, 7.0});
}

TEST_CASE("shape mismatches are rejected with shapes in the message") {
  Graph g;
  NodeId a = g.constant(Tensor::vector({1.0, 2.0}));
  NodeId b = g.constant(Tensor::vector({1.0, 2.0, 3.0}));
  CHECK_THROWS_WITH_AS(g.add(a, b), doctest::Contains("[2]"), std::invalid_argument);
  CHECK_THROWS_AS(g.matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(g.slice_last(a, 1, 2), std::invalid_argument);
  CHECK_THROWS_AS(g.log(g.constant(Tensor::vector({-1.0}))), std::invalid_argument);
}

TEST_CASE("backward spot gradients") {
  {
    Graph g;
    NodeId w = g.leaf(Tensor::vector({3.0}), true);
    g.backward(g.sum(g.square(w)));
    CHECK(g.grad(w)[0] == 6.0);
  }
  {
    Graph g;
    NodeId w = g.leaf(Tensor::vector({1.0, 2.0, 3.0, 4.0}), true);
    g.backward(g.mean(w));
    for (std::size_t i = 0; i < 4; ++i) CHECK(g.grad(w)[i] == 0.25);
  }
  {
    Graph g;
    NodeId w = g.leaf(Tensor::vector({2.0}), true);
    CHECK_THROWS_AS(g.backward(g.concat_last(w, w)), std::invalid_argument);  // non-scalar loss
  }
}

namespace {

// Scalar loss exercising one operator inside a smooth composite so gradients
// are informative at random points.
double op_loss_value(OpKind kind, const Tensor& x, const Tensor& y) {
  Graph g;
  NodeId a = g.leaf(x, true);
  NodeId b = g.constant(y);
  NodeId node;
  switch (kind) {
    case OpKind::kAdd: node = g.add(a, b); break;
    case OpKind::kSub: node = g.sub(a, b); break;
    case OpKind::kMul: node = g.mul(a, b); break;
    case OpKind::kScale: node = g.scale(a, 1.7); break;
    case OpKind::kTanh: node = g.tanh(a); break;
    case OpKind::kRelu: node = g.relu(a); break;
    case OpKind::kSigmoid: node = g.sigmoid(a); break;
    case OpKind::kSquare: node = g.square(a); break;
    case OpKind::kLog: node = g.log(g.add(g.square(a), g.constant(Tensor::full(x.shape(), 0.5)))); break;
    case OpKind::kSum: return g.value(g.sum(a))[0];
    case OpKind::kMean: return g.value(g.mean(a))[0];
    case OpKind::kConcatLast: node = g.concat_last(a, b); break;
    case OpKind::kSliceLast: node = g.slice_last(a, 1, x.size() - 1); break;
    default: throw std::logic_error("unsupported op in test");
  }
  return g.value(g.mean(g.square(node)))[0];
}

Tensor op_loss_grad(OpKind kind, const Tensor& x, const Tensor& y) {
  Graph g;
  NodeId a = g.leaf(x, true);
  NodeId b = g.constant(y);
  NodeId node;
  switch (kind) {
    case OpKind::kAdd: node = g.add(a, b); break;
    case OpKind::kSub: node = g.sub(a, b); break;
    case OpKind::kMul: node = g.mul(a, b); break;
    case OpKind::kScale: node = g.scale(a, 1.7); break;
    case OpKind::kTanh: node = g.tanh(a); break;
    case OpKind::kRelu: node = g.relu(a); break;
    case OpKind::kSigmoid: node = g.sigmoid(a); break;
    case OpKind::kSquare: node = g.square(a); break;
    case OpKind::kLog: node = g.log(g.add(g.square(a), g.constant(Tensor::full(x.shape(), 0.5)))); break;
    case OpKind::kSum: {
      NodeId loss = g.sum(a);
      g.backward(loss);
      return g.grad(a);
    }
    case OpKind::kMean: {
      NodeId loss = g.mean(a);
      g.backward(loss);
      return g.grad(a);
    }
    case OpKind::kConcatLast: node = g.concat_last(a, b); break;
    case OpKind::kSliceLast: node = g.slice_last(a, 1, x.size() - 1); break;
    default: throw std::logic_error("unsupported op in test");
  }
  g.backward(g.mean(g.square(node)));
  return g.grad(a);
}

}  // namespace

TEST_CASE("every operator's gradient matches central differences over 100 seeds") {
  const OpKind kinds[] = {OpKind::kAdd,  OpKind::kSub,     OpKind::kMul,       OpKind::kScale,
                          OpKind::kTanh, OpKind::kRelu,    OpKind::kSigmoid,   OpKind::kSum,
                          OpKind::kMean, OpKind::kSquare,  OpKind::kLog,       OpKind::kConcatLast,
                          OpKind::kSliceLast};
  for (OpKind kind : kinds) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(derive_seed(seed, "gradcheck", static_cast<std::uint64_t>(kind)));
      // Keep relu inputs away from the kink: the subgradient convention there
      // is not what central differences measure.
      Tensor x = kind == OpKind::kRelu ? random_tensor(rng, {5}, 0.2, 1.0) : random_tensor(rng, {5});
      Tensor y = random_tensor(rng, {5}, 0.5, 1.5);
      Tensor analytic = op_loss_grad(kind, x, y);
      auto f = [&](const Tensor& probe) { return op_loss_value(kind, probe, y); };
      CHECK(finite_diff_check(f, x, analytic, 1e-5) < 1e-4);
    }
  }
}

TEST_CASE("matmul gradients match central differences in both operand slots") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(seed, "matmul-grad", 0));
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4, 2});
    Tensor v = random_tensor(rng, {4});

    auto loss_wrt_a = [&](const Tensor& probe) {
      Graph g;
      NodeId n = g.matmul(g.leaf(probe, true), g.constant(b));
      return g.value(g.mean(g.square(n)))[0];
    };
    Graph g;
    NodeId an = g.leaf(a, true);
    g.backward(g.mean(g.square(g.matmul(an, g.constant(b)))));
    CHECK(finite_diff_check(loss_wrt_a, a, g.grad(an), 1e-5) < 1e-6);

    auto loss_wrt_b = [&](const Tensor& probe) {
      Graph h;
      NodeId n = h.matmul(h.constant(a), h.leaf(probe, true));
      return h.value(h.mean(h.square(n)))[0];
    };
    Graph h;
    NodeId bn = h.leaf(b, true);
    h.backward(h.mean(h.square(h.matmul(h.constant(a), bn))));
    CHECK(finite_diff_check(loss_wrt_b, b, h.grad(bn), 1e-5) < 1e-6);

    auto loss_matvec = [&](const Tensor& probe) {
      Graph k;
      NodeId n = k.matmul(k.constant(a), k.leaf(probe, true));
      return k.value(k.mean(k.square(n)))[0];
    };
    Graph k;
    NodeId vn = k.leaf(v, true);
    k.backward(k.mean(k.square(k.matmul(k.constant(a), vn))));
    CHECK(finite_diff_check(loss_matvec, v, k.grad(vn), 1e-5) < 1e-6);
  }
}

TEST_CASE("two-layer tanh network gradient vs finite differences") {
  Rng rng(7);
  Tensor w1 = random_tensor(rng, {4, 3}, -0.5, 0.5);
  Tensor w2 = random_tensor(rng, {1, 4}, -0.5, 0.5);
  Tensor x = random_tensor(rng, {3});

  auto build = [&](const Tensor& w1_probe) {
    Graph g;
    NodeId h = g.tanh(g.matmul(g.leaf(w1_probe, true), g.constant(x)));
    return g.value(g.sum(g.matmul(g.constant(w2), h)))[0];
  };
  Graph g;
  NodeId w1n = g.leaf(w1, true);
  NodeId h = g.tanh(g.matmul(w1n, g.constant(x)));
  g.backward(g.sum(g.matmul(g.constant(w2), h)));
  CHECK(finite_diff_check(build, w1, g.grad(w1n), 1e-5) < 1e-6);
}

TEST_CASE("backward is linear in the loss scale") {
  Rng rng(11);
  Tensor w = random_tensor(rng, {6});
  auto grads_for_scale = [&](double alpha) {
    Graph g;
    NodeId wn = g.leaf(w, true);
    NodeId loss = g.mean(g.square(g.tanh(wn)));
    g.backward(g.scale(loss, alpha));
    return g.grad(wn);
  };
  Tensor g1 = grads_for_scale(1.0);
  Tensor g2 = grads_for_scale(2.0);  // power of two: exact in floating point
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(g2[i] == 2.0 * g1[i]);

  Tensor g3 = grads_for_scale(3.0);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(g3[i] == doctest::Approx(3.0 * g1[i]).epsilon(1e-15));
}

TEST_CASE("graph evaluation is bit-deterministic") {
  auto run = [] {
    Rng rng(42);
    std::vector<double> xs(8);
    for (double& v : xs) v = rng.normal();
    Graph g;
    NodeId w = g.leaf(Tensor::vector(xs), true);
    NodeId loss = g.mean(g.square(g.sigmoid(g.scale(w, 1.3))));
    g.backward(loss);
    return std::make_pair(g.value(loss)[0], g.grad(w));
  };
  auto [v1, grad1] = run();
  auto [v2, grad2] = run();
  CHECK(v1 == v2);
  for (std::size_t i = 0; i < grad1.size(); ++i) CHECK(grad1[i] == grad2[i]);
}

TEST_CASE("gradients of unreachable leaves stay zero") {
  Graph g;
  NodeId used = g.leaf(Tensor::vector({1.0}), true);
  NodeId unused = g.leaf(Tensor::vector({5.0}), true);
  g.backward(g.sum(g.square(used)));
  CHECK(g.grad(unused)[0] == 0.0);
  auto grads = g.trainable_gradients();
  CHECK(grads.size() == 2);
}

TEST_CASE("scalar broadcast works for add/sub/mul and reduces gradients") {
  Graph g;
  NodeId v = g.leaf(Tensor::vector({1.0, 2.0, 3.0}), true);
  NodeId s = g.leaf(Tensor::scalar(2.0), true);
  NodeId out = g.mul(v, s);
  CHECK(g.value(out).data() == std::vector<double>{2.0, 4.0, 6.0});
  g.backward(g.sum(out));
  CHECK(g.grad(s)[0] == 6.0);  // sum over the broadcast
  CHECK(g.grad(v).data() == std::vector<double>{2.0, 2.0, 2.0});
}
