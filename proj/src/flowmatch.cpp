// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include "flowforge/flowmatch.hpp"

#include <cmath>
#include <stdexcept>

#include "flowforge/rng.hpp"

namespace flowforge {

FlowPoint make_flow_point(const Tensor& z0, const Tensor& z1, double t) {
  if (!z0.same_shape(z1)) {
    throw std::invalid_argument("make_flow_point: shape mismatch " + z0.shape_string() + " vs " + z1.shape_string());
  }
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::invalid_argument("make_flow_point: t must lie in [0,1], got " + std::to_string(t));
  }
  FlowPoint p;
  p.z0 = z0;
  p.z1 = z1;
  p.t = t;
  if (t == 0.0) {
    p.zt = z0;
  } else if (t == 1.0) {
    p.zt = z1;
  } else {
    std::vector<double> zt(z0.size());
    for (std::size_t i = 0; i < z0.size(); ++i) zt[i] = t * z1[i] + (1.0 - t) * z0[i];
    p.zt = Tensor(z0.shape(), std::move(zt));
  }
  std::vector<double> vt(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) vt[i] = z1[i] - z0[i];
  p.vt = Tensor(z0.shape(), std::move(vt));
  return p;
}

NodeId fm_loss(Graph& graph, NodeId pred_velocity, const Tensor& target_velocity) {
  return fm_loss(graph, pred_velocity, graph.constant(target_velocity));
}

NodeId fm_loss(Graph& graph, NodeId pred_velocity, NodeId target_velocity) {
  if (!graph.value(pred_velocity).same_shape(graph.value(target_velocity))) {
    throw std::invalid_argument("fm_loss: shape mismatch " + graph.value(pred_velocity).shape_string() + " vs " +
                                graph.value(target_velocity).shape_string());
  }
  return graph.mean(graph.square(graph.sub(pred_velocity, target_velocity)));
}

NodeId predicted_clean(Graph& graph, NodeId u_out, NodeId z0) {
  if (!graph.value(u_out).same_shape(graph.value(z0))) {
    throw std::invalid_argument("predicted_clean: shape mismatch");
  }
  return graph.add(u_out, z0);
}

Tensor predicted_clean_value(const Tensor& u_out, const Tensor& z0) {
  if (!u_out.same_shape(z0)) throw std::invalid_argument("predicted_clean: shape mismatch");
  std::vector<double> out(u_out.size());
  for (std::size_t i = 0; i < u_out.size(); ++i) out[i] = u_out[i] + z0[i];
  return Tensor(u_out.shape(), std::move(out));
}

std::string_view scheme_name(Scheme s) { return s == Scheme::kEuler ? "euler" : "heun"; }

Scheme scheme_from_name(std::string_view name) {
  if (name == "euler") return Scheme::kEuler;
  if (name == "heun") return Scheme::kHeun;
  throw std::invalid_argument("unknown sampler scheme: " + std::string(name));
}

void SamplerConfig::validate() const {
  if (steps == 0) throw std::invalid_argument("sampler config: steps must be >= 1");
}

namespace {

// Builds the next state from raw values, converting any overflow into a
// NumericalError that names the failing step (Tensor construction itself
// rejects non-finite data with the wrong error type for this context).
Tensor checked_state(const Tensor& shape_like, std::vector<double> values, std::size_t step) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericalError("sampler: non-finite state at step " + std::to_string(step));
    }
  }
  return Tensor(shape_like.shape(), std::move(values));
}

std::vector<double> axpy_raw(const Tensor& z, double h, const Tensor& d) {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] + h * d[i];
  return out;
}

}  // namespace

Tensor integrate(const FieldFn& field, Tensor z, double t_start, std::size_t steps, Scheme scheme) {
  if (steps == 0) throw std::invalid_argument("integrate: steps must be >= 1");
  if (!(t_start >= 0.0 && t_start <= 1.0)) throw std::invalid_argument("integrate: t_start outside [0,1]");
  double h = (1.0 - t_start) / static_cast<double>(steps);
  double t = t_start;
  for (std::size_t step = 0; step < steps; ++step) {
    Tensor k1;
    try {
      k1 = field(z, t);
    } catch (const std::invalid_argument&) {
      throw NumericalError("sampler: non-finite state at step " + std::to_string(step));
    }
    if (scheme == Scheme::kEuler) {
      z = checked_state(z, axpy_raw(z, h, k1), step);
    } else {
      Tensor z_pred = checked_state(z, axpy_raw(z, h, k1), step);
      Tensor k2;
      try {
        k2 = field(z_pred, t + h);
      } catch (const std::invalid_argument&) {
        throw NumericalError("sampler: non-finite state at step " + std::to_string(step));
      }
      std::vector<double> out(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] + 0.5 * h * (k1[i] + k2[i]);
      z = checked_state(z, std::move(out), step);
    }
    t = t_start + (1.0 - t_start) * static_cast<double>(step + 1) / static_cast<double>(steps);
  }
  return z;
}

Tensor sample(const ModelParams& params, const Tensor& cond, const SamplerConfig& sampler) {
  sampler.validate();
  if (cond.size() != params.config.cond_dim) {
    throw std::invalid_argument("sample: cond length does not match model");
  }
  Rng rng(sampler.seed);
  std::vector<double> z0(params.config.latent_dim);
  for (double& v : z0) v = rng.normal();
  Tensor z = Tensor::vector(std::move(z0));
  auto field = [&](const Tensor& state, double t) { return forward_value(params, state, cond, t); };
  return integrate(field, std::move(z), 0.0, sampler.steps, sampler.scheme);
}

}  // namespace flowforge
