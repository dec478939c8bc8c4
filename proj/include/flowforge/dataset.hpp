// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flowforge/flowmatch.hpp"
#include "flowforge/promptengine.hpp"
#include "flowforge/tensor.hpp"
#include "flowforge/velocity_model.hpp"
#include "flowforge/worldsim.hpp"

namespace flowforge {

/// Provenance of one training sample:
///   PsVs - synthetic prompt, synthetic video
///   PrVs - real caption, synthetic video (paired with the real latent)
///   PrVr - real caption, real video (latent == real_latent)
enum class Source { kPsVs, kPrVs, kPrVr };

std::string_view source_name(Source s);
Source source_from_name(std::string_view name);

/// Scalar reward in [0,1] plus a validity flag. Invalid scores are ignored by
/// every consumer regardless of value.
struct RewardScore {
  double value = 0.0;
  bool valid = false;
};

struct DatasetRecord {
  std::uint64_t id = 0;
  Source source = Source::kPsVs;
  PromptSpec spec;
  Tensor latent;
  std::optional<Tensor> real_latent;  // present iff source is PrVs or PrVr
  std::optional<RewardScore> reward;
  std::uint64_t gen_seed = 0;

  void validate() const;
};

struct DataMixConfig {
  std::set<Source> include{Source::kPsVs, Source::kPrVs, Source::kPrVr};
  std::size_t count_psvs = 950;
  std::size_t count_prvs = 175;
  std::size_t count_prvr = 175;
  std::vector<Dimension> target_dimensions{Dimension::kMotionRationality};
  DefectConfig defects;  // applied only when building the pretrain corpus
  std::uint64_t seed = 0;
  std::size_t variants_per_base = 4;

  void validate() const;
  std::size_t total_count() const;
};

/// Assembles the three-source training set. PsVs prompts come from the base
/// generator plus stylistic variants over the target dimensions; PrVs/PrVr
/// derive from oracle trajectories captioned back into prompts, with caption
/// dimensions mixed uniformly over all five axes. Synthetic latents are
/// sampled from the model (required iff a synthetic source is included).
/// Deterministic per mix.seed; record ids are dense from 0.
std::vector<DatasetRecord> build_dataset(const DataMixConfig& mix, const ModelParams* model,
                                         const SamplerConfig& sampler, const WorldConfig& world = {},
                                         std::size_t workers = 1);

/// Line-delimited text serialization. The header line carries the format
/// version and the generating mix; each record line carries id, source, spec,
/// seed, latent (and optional real latent / reward) with round-trip float
/// formatting, so identical inputs produce byte-identical files.
void write_dataset(const std::filesystem::path& path, const DataMixConfig& mix,
                   const std::vector<DatasetRecord>& records);

struct DatasetFile {
  DataMixConfig mix;
  std::vector<DatasetRecord> records;
};

DatasetFile read_dataset(const std::filesystem::path& path);

std::string format_double_roundtrip(double v);

}  // namespace flowforge
