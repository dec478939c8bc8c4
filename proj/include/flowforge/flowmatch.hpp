// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string_view>

#include "flowforge/autodiff.hpp"
#include "flowforge/tensor.hpp"
#include "flowforge/velocity_model.hpp"

namespace flowforge {

/// One point on the straight path between noise and data:
///   zt = t*z1 + (1-t)*z0,  vt = z1 - z0.
/// Endpoints are exact: t=0 reproduces z0 bitwise, t=1 reproduces z1.
struct FlowPoint {
  Tensor z0;
  Tensor z1;
  double t = 0.0;
  Tensor zt;
  Tensor vt;
};

FlowPoint make_flow_point(const Tensor& z0, const Tensor& z1, double t);

/// Flow-matching loss: mean over elements of the squared velocity error.
/// The mean (rather than sum) keeps the loss scale independent of the latent
/// dimension, so the lambda defaults transfer across configs.
NodeId fm_loss(Graph& graph, NodeId pred_velocity, const Tensor& target_velocity);
NodeId fm_loss(Graph& graph, NodeId pred_velocity, NodeId target_velocity);

/// One-step clean-latent estimate u + z0.
NodeId predicted_clean(Graph& graph, NodeId u_out, NodeId z0);
Tensor predicted_clean_value(const Tensor& u_out, const Tensor& z0);

enum class Scheme { kEuler, kHeun };

std::string_view scheme_name(Scheme s);
Scheme scheme_from_name(std::string_view name);

struct SamplerConfig {
  std::size_t steps = 32;
  Scheme scheme = Scheme::kEuler;
  std::uint64_t seed = 0;

  void validate() const;
};

using FieldFn = std::function<Tensor(const Tensor& z, double t)>;

/// Integrates dz/dt = field(z, t) from t_start to 1 with uniform steps.
/// Throws NumericalError naming the failing step on non-finite states.
Tensor integrate(const FieldFn& field, Tensor z, double t_start, std::size_t steps, Scheme scheme);

/// Draws z0 ~ N(0, I) from the config seed and integrates the model field
/// from t=0 to t=1. Deterministic per seed.
Tensor sample(const ModelParams& params, const Tensor& cond, const SamplerConfig& sampler);

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace flowforge
