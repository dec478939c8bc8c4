// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowforge/autodiff.hpp"
#include "flowforge/tensor.hpp"

namespace flowforge {

enum class Activation { kTanh, kRelu, kSigmoid };

std::string_view activation_name(Activation a);
Activation activation_from_name(std::string_view name);

/// Architecture of the conditional velocity-field MLP. The network maps
/// concat(z_t, cond, time_embed(t)) through the hidden stack to a velocity of
/// the same length as the latent.
struct ModelConfig {
  std::size_t latent_dim = 192;
  std::size_t cond_dim = 13;
  std::vector<std::size_t> hidden_dims{256, 256};
  std::size_t time_embed_dim = 8;
  Activation activation = Activation::kTanh;
  std::uint64_t seed = 0;

  std::size_t input_dim() const { return latent_dim + cond_dim + time_embed_dim; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Weights of the velocity network. Layer i maps dims[i] -> dims[i+1] with
/// weight shape [out, in] and bias shape [out]. Immutable during forward
/// passes; only the trainer's sequential update step mutates them.
struct ModelParams {
  ModelConfig config;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  std::uint32_t version = kCheckpointVersion;

  std::size_t layer_count() const { return weights.size(); }
  std::size_t param_count() const;
  void validate() const;
};

/// Seeded init: weights uniform in [-1, 1] scaled by 1/sqrt(fan_in), biases
/// exactly zero. Bit-identical for equal seeds.
ModelParams init_params(const ModelConfig& config);

/// Sinusoidal timestep embedding: [sin(2*pi*f_i*t), cos(2*pi*f_i*t)] pairs
/// with f_i = 2^i. dim must be even; t must lie in [0, 1].
Tensor time_embed(double t, std::size_t dim);

/// Parameter leaves bound onto a graph, reusable across the samples of one
/// batch so gradients accumulate per parameter tensor.
struct BoundModel {
  const ModelParams* params = nullptr;
  std::vector<NodeId> weight_nodes;
  std::vector<NodeId> bias_nodes;
};

BoundModel bind_params(Graph& graph, const ModelParams& params, bool trainable);

/// Graph forward pass: u(z_t, cond, t). zt must be a node of length
/// latent_dim; cond and t enter as constants.
NodeId forward(Graph& graph, const BoundModel& model, NodeId zt, const Tensor& cond, double t);

/// Graph-free forward pass for sampling and online scoring. Matches the graph
/// path bit for bit (same kernel, same summation order).
Tensor forward_value(const ModelParams& params, const Tensor& zt, const Tensor& cond, double t);

/// Batched training path: parameter leaves bound with biases as [H,1]
/// columns so a whole batch flows through matrix-matrix products.
struct BatchBound {
  const ModelParams* params = nullptr;
  std::vector<NodeId> weight_nodes;
  std::vector<NodeId> bias_col_nodes;
};

BatchBound bind_params_batch(Graph& graph, const ModelParams& params, bool trainable);

/// Stacks per-sample inputs concat(z_t, cond, time_embed(t)) into the
/// [input_dim, batch] matrix forward_batch consumes.
Tensor stack_inputs(const ModelParams& params, const std::vector<Tensor>& zts, const std::vector<Tensor>& conds,
                    const std::vector<double>& ts);

/// Returns the [latent_dim, batch] velocity matrix; column i matches
/// forward_value on sample i bit for bit.
NodeId forward_batch(Graph& graph, const BatchBound& model, const Tensor& inputs);

/// Checkpoint I/O. Layout: magic "FFCK", version, config block, little-endian
/// float64 payload, trailing FNV-1a checksum of the payload bytes. Round
/// trips are bit-exact.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

enum class CheckpointErrorKind { kBadMagic, kVersionMismatch, kTruncated, kChecksumMismatch, kIo, kBadField };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

}  // namespace flowforge
