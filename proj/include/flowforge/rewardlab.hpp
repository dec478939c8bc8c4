// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flowforge/autodiff.hpp"
#include "flowforge/dataset.hpp"
#include "flowforge/prompt_spec.hpp"
#include "flowforge/worldsim.hpp"

namespace flowforge {

/// Frozen scorer parameters. Hard scorers are pure deterministic predicates
/// of (trajectory, spec, config); soft scorers replace each predicate with a
/// sigmoid at temperature `softness` over the threshold-normalized margin.
struct ScorerConfig {
  double delta_max = 0.08;  // max plausible per-frame displacement
  double a_min = 0.2;       // presence intensity threshold
  double eps_cam = 0.01;    // min mean displacement for camera scorability
  double softness = 25.0;   // smooth-scorer temperature

  void validate() const;
  std::string canonical_string() const;
  std::uint64_t hash() const;
};

/// Dimension-specific hard score in [0,1]:
///   motion:   fraction of (transition, object) pairs with step <= delta_max
///   instance: fraction of frames whose presence count equals object_count
///   gravity:  1 - |g_hat - g|/g clamped to [0,1]; valid iff >= 3 pre-bounce
///             frames (slot 0 is the falling object by convention)
///   spatial:  fraction of frames where the prompted ordering holds
///   camera:   max(0, cosine(mean drift, prompted heading)); valid iff the
///             mean drift magnitude reaches eps_cam
RewardScore score_hard(Dimension dimension, const VideoTrajectory& traj, const PromptSpec& spec,
                       const ScorerConfig& cfg);

/// Smooth surrogate of score_hard, differentiable in the latent. Agrees with
/// the hard score within 0.1 on margin-separated inputs (every sigmoid
/// argument at least ~2 away from its threshold, and for the continuous-value
/// dimensions the drift near-parallel or antiparallel to the prompt).
/// Gradients are finite everywhere; world coordinates are read through the
/// unclamped affine decode so no gradient is lost to saturation.
NodeId score_soft(Graph& graph, Dimension dimension, NodeId latent, const PromptSpec& spec, const ScorerConfig& cfg,
                  const WorldConfig& world = {});

/// Convenience evaluation on a plain tensor (builds a throwaway graph).
double score_soft_value(Dimension dimension, const Tensor& latent, const PromptSpec& spec, const ScorerConfig& cfg,
                        const WorldConfig& world = {});

/// Parameters for scoring a clip against a dimension it was not prompted
/// for, estimated from the clip itself. Empty when the clip is not reliably
/// scorable under that dimension (the validity gate of the reward pipeline).
std::optional<PromptSpec> estimate_spec_for(Dimension target, const VideoTrajectory& traj, const ScorerConfig& cfg);

struct ScoreSummary {
  std::size_t n_records = 0;
  std::size_t n_valid = 0;
  std::size_t n_positive = 0;  // valid and value > 0
  std::size_t cache_hits = 0;
  bool cache_invalidated = false;
};

/// Fills rewards for every record: records whose prompt dimension is among
/// the targets score against their own spec; others score against targets[0]
/// through estimate_spec_for and are valid only when estimable. Idempotent;
/// maintains a sidecar cache at <dataset>.scores keyed by (record id,
/// dimension, config hash). A cache built under a different config hash is
/// discarded and rebuilt.
ScoreSummary score_dataset(const std::filesystem::path& in_path, const std::filesystem::path& out_path,
                           const ScorerConfig& cfg, const std::vector<Dimension>& targets, std::size_t workers = 1,
                           const WorldConfig& world = {});

/// Keeps exactly the records with a valid, strictly positive reward,
/// preserving order and every field. Rewards must be present on all records.
/// Returns the number of records kept (zero is legal and worth a warning).
std::size_t filter_dataset(const std::filesystem::path& in_path, const std::filesystem::path& out_path);

std::vector<DatasetRecord> filter_records(const std::vector<DatasetRecord>& records);

}  // namespace flowforge
