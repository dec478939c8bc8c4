// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "flowforge/flowmatch.hpp"
#include "flowforge/rng.hpp"

using namespace flowforge;

namespace {

// Test-only matrix-exponential oracle: exp(A) by Taylor series. Entries of A
// are small enough that the series converges to machine precision quickly.
std::vector<double> expm(const std::vector<double>& a, std::size_t n) {
  std::vector<double> result(n * n, 0.0), term(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    result[i * n + i] = 1.0;
    term[i * n + i] = 1.0;
  }
  for (int k = 1; k <= 40; ++k) {
    std::vector<double> next(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t m = 0; m < n; ++m) {
        double t = term[i * n + m];
        if (t == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) next[i * n + j] += t * a[m * n + j];
      }
    }
    for (double& v : next) v /= static_cast<double>(k);
    term = next;
    for (std::size_t i = 0; i < n * n; ++i) result[i] += term[i];
  }
  return result;
}

Tensor matvec(const std::vector<double>& m, const Tensor& v) {
  std::size_t n = v.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i] += m[i * n + j] * v[j];
  }
  return Tensor::vector(std::move(out));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_CASE("flow point endpoints are exact and vt is the difference") {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> a(6), b(6);
    for (double& v : a) v = rng.normal();
    for (double& v : b) v = rng.normal();
    Tensor z0 = Tensor::vector(a), z1 = Tensor::vector(b);
    FlowPoint p0 = make_flow_point(z0, z1, 0.0);
    FlowPoint p1 = make_flow_point(z0, z1, 1.0);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(p0.zt[i] == z0[i]);
      CHECK(p1.zt[i] == z1[i]);
      CHECK(p0.vt[i] == z1[i] - z0[i]);
    }
  }
}

TEST_CASE("flow point interpolation at interior t") {
  Tensor z0 = Tensor::vector({0.0, 0.0});
  Tensor z1 = Tensor::vector({2.0, 4.0});
  FlowPoint p = make_flow_point(z0, z1, 0.25);
  CHECK(p.zt[0] == doctest::Approx(0.5));
  CHECK(p.zt[1] == doctest::Approx(1.0));
  CHECK(p.vt[0] == 2.0);
  CHECK(p.vt[1] == 4.0);
  CHECK_THROWS_AS(make_flow_point(z0, Tensor::vector({1.0}), 0.5), std::invalid_argument);
  CHECK_THROWS_AS(make_flow_point(z0, z1, 1.5), std::invalid_argument);
}

TEST_CASE("fm_loss arithmetic and gradient") {
  Graph g;
  NodeId pred = g.leaf(Tensor::vector({3.0, 4.0}), true);
  Tensor target = Tensor::vector({0.0, 0.0});
  NodeId loss = fm_loss(g, pred, target);
  CHECK(g.value(loss)[0] == doctest::Approx(12.5));  // (9+16)/2

  g.backward(loss);
  auto f = [&](const Tensor& probe) {
    Graph h;
    return h.value(fm_loss(h, h.leaf(probe, true), target))[0];
  };
  CHECK(finite_diff_check(f, Tensor::vector({3.0, 4.0}), g.grad(pred), 1e-5) < 1e-6);

  Graph h;
  NodeId same = h.leaf(Tensor::vector({1.0, -2.0}), true);
  CHECK(h.value(fm_loss(h, same, Tensor::vector({1.0, -2.0})))[0] == 0.0);
}

TEST_CASE("predicted_clean recovers z1 when the velocity is exact") {
  Graph g;
  Tensor z0 = Tensor::vector({2.0, 3.0});
  NodeId u = g.constant(Tensor::vector({1.0, 1.0}));
  NodeId clean = predicted_clean(g, u, g.constant(z0));
  CHECK(g.value(clean).data() == std::vector<double>{3.0, 4.0});

  Tensor z1 = Tensor::vector({-1.0, 5.0});
  Tensor exact_u = Tensor::vector({z1[0] - z0[0], z1[1] - z0[1]});
  CHECK(predicted_clean_value(exact_u, z0).data() == z1.data());
  CHECK(predicted_clean_value(Tensor::vector({0.0, 0.0}), z0).data() == z0.data());
}

TEST_CASE("one euler step over a constant field adds the field") {
  Tensor z0 = Tensor::vector({1.0, -1.0});
  Tensor c = Tensor::vector({0.5, 2.0});
  auto field = [&](const Tensor&, double) { return c; };
  Tensor end = integrate(field, z0, 0.0, 1, Scheme::kEuler);
  CHECK(end[0] == doctest::Approx(1.5));
  CHECK(end[1] == doctest::Approx(1.0));
}

TEST_CASE("rectified path field reaches the target exactly for any step count") {
  Tensor z0 = Tensor::vector({0.2, -0.4, 1.1});
  Tensor a = Tensor::vector({-0.7, 0.9, 0.3});
  std::vector<double> c(3);
  for (std::size_t i = 0; i < 3; ++i) c[i] = a[i] - z0[i];
  Tensor field_value = Tensor::vector(c);
  auto field = [&](const Tensor&, double) { return field_value; };
  for (std::size_t steps : {1, 3, 32}) {
    Tensor end = integrate(field, z0, 0.0, steps, Scheme::kEuler);
    for (std::size_t i = 0; i < 3; ++i) CHECK(end[i] == doctest::Approx(a[i]).epsilon(1e-12));
  }
}

TEST_CASE("euler error is first order and heun second order on a linear field") {
  // dz/dt = A z has the closed-form endpoint exp(A) z0.
  const std::size_t n = 4;
  std::vector<double> a = {0.4, -0.3, 0.1, 0.0,  0.2, 0.5, -0.2, 0.1,
                           0.0, 0.3,  0.6, -0.4, 0.1, 0.0, 0.2,  0.3};
  Rng rng(9);
  std::vector<double> z(n);
  for (double& v : z) v = rng.normal();
  Tensor z0 = Tensor::vector(z);
  Tensor truth = matvec(expm(a, n), z0);

  auto field = [&](const Tensor& state, double) {
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) out[i] += a[i * n + j] * state[j];
    }
    return Tensor::vector(std::move(out));
  };

  auto error_at = [&](std::size_t steps, Scheme scheme) {
    return max_abs_diff(integrate(field, z0, 0.0, steps, scheme), truth);
  };

  double e32 = error_at(32, Scheme::kEuler);
  double e64 = error_at(64, Scheme::kEuler);
  double e128 = error_at(128, Scheme::kEuler);
  CHECK(e32 / e64 == doctest::Approx(2.0).epsilon(0.2));
  CHECK(e64 / e128 == doctest::Approx(2.0).epsilon(0.2));

  double h16 = error_at(16, Scheme::kHeun);
  double h32 = error_at(32, Scheme::kHeun);
  double h64 = error_at(64, Scheme::kHeun);
  CHECK(h16 / h32 == doctest::Approx(4.0).epsilon(0.2));
  CHECK(h32 / h64 == doctest::Approx(4.0).epsilon(0.2));
}

TEST_CASE("sampler is deterministic per seed and reports divergence step") {
  ModelConfig cfg;
  cfg.latent_dim = 6;
  cfg.cond_dim = 3;
  cfg.hidden_dims = {8};
  cfg.time_embed_dim = 4;
  cfg.seed = 17;
  ModelParams params = init_params(cfg);
  Tensor cond = Tensor::vector({1.0, 0.0, 0.5});
  SamplerConfig sampler;
  sampler.steps = 8;
  sampler.seed = 99;
  Tensor s1 = sample(params, cond, sampler);
  Tensor s2 = sample(params, cond, sampler);
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == s2[i]);
  sampler.seed = 100;
  Tensor s3 = sample(params, cond, sampler);
  bool any_diff = false;
  for (std::size_t i = 0; i < s1.size(); ++i) any_diff = any_diff || s1[i] != s3[i];
  CHECK(any_diff);

  // A field that blows up must surface as a numerical failure, not a shape
  // error: the state update overflows to infinity.
  auto blowup = [](const Tensor&, double) { return Tensor::vector({1.6e308}); };
  CHECK_THROWS_WITH_AS(integrate(blowup, Tensor::vector({1.6e308}), 0.0, 1, Scheme::kEuler),
                       doctest::Contains("step 0"), NumericalError);
}
