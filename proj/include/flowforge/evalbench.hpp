// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "flowforge/dataset.hpp"
#include "flowforge/rewardlab.hpp"
#include "flowforge/trainer.hpp"

namespace flowforge {

struct EvalConfig {
  std::vector<Dimension> dimensions{kAllDimensions.begin(), kAllDimensions.end()};
  std::size_t prompts_per_dimension = 32;
  std::size_t samples_per_prompt = 2;
  SamplerConfig sampler;
  ScorerConfig scorer;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const;
};

struct DimensionResult {
  Dimension dimension = Dimension::kMotionRationality;
  double mean_score_percent = 0.0;  // 100 * mean over valid samples
  std::size_t n_scored = 0;
  std::size_t n_invalid = 0;

  /// More than half of the samples were unscorable; the report carries this
  /// as an annotation instead of a silent number.
  bool low_validity() const { return 2 * n_invalid > n_scored + n_invalid; }
};

/// Pluggable generator: maps a prompt and a per-sample seed to a latent.
/// Production binds the ODE sampler over a checkpoint; tests may bind an
/// oracle replay.
using SampleFn = std::function<Tensor(const Prompt& prompt, std::uint64_t seed)>;

SampleFn model_sampler(const ModelParams& params, const SamplerConfig& sampler);

/// Generates a fresh seeded prompt set (namespace disjoint from training
/// seeds), samples videos, hard-scores each, and reports 100 * mean over
/// valid samples.
DimensionResult eval_dimension(const SampleFn& sample_fn, Dimension dimension, const EvalConfig& cfg,
                               const WorldConfig& world = {});
DimensionResult eval_dimension(const ModelParams& params, Dimension dimension, const EvalConfig& cfg,
                               const WorldConfig& world = {});

std::vector<DimensionResult> eval_all(const ModelParams& params, const EvalConfig& cfg, const WorldConfig& world = {});

/// A report table: pre-formatted cells plus the provenance the manifest
/// records.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

/// Fixed two-decimal rendering used for every numeric cell.
std::string format_cell(double v);

/// Shared knobs for the ablation runners.
struct AblationConfig {
  DataMixConfig mix;
  SamplerConfig sampler;
  ScorerConfig scorer;
  LossConfig loss;
  TrainConfig train;
  EvalConfig eval;
  WorldConfig world;
  std::size_t workers = 1;
};

/// Data-source ablation: the six include-sets {} , {PsVs}, {PrVs},
/// {PsVs,PrVs}, {PrVs,PrVr}, {all}; each builds a dataset, fine-tunes with
/// reweight_offline, and evaluates the target dimension plus the mean drift
/// of the non-target dimensions.
Table ablate_data_sources(const ModelParams& base, const AblationConfig& cfg);

/// Reward-strategy ablation over one scored dataset: per-strategy final
/// score and per-epoch wall seconds.
Table ablate_strategies(const ModelParams& base, const std::vector<DatasetRecord>& scored,
                        const AblationConfig& cfg);

/// Combined-dimension training: per group, fine-tunes each member dimension
/// alone and the union with own-dimension rewards; one table per group with
/// baseline / single / combined rows over member-dimension columns plus the
/// mean.
std::vector<Table> ablate_combined(const ModelParams& base,
                                   const std::vector<std::pair<std::string, std::vector<Dimension>>>& groups,
                                   const AblationConfig& cfg);

enum class ReportFormat { kCsv, kMarkdown };

/// Deterministic serialization of the tables to <path>. CSV uses RFC-4180
/// quoting; markdown uses pipe tables. A sibling <path>.manifest records the
/// config hash and seed of every table.
void emit_report(const std::vector<Table>& tables, const std::filesystem::path& path, ReportFormat format);

Table results_to_table(const std::string& name, const std::vector<DimensionResult>& results, std::uint64_t config_hash,
                       std::uint64_t seed);

}  // namespace flowforge
