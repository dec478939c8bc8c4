// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "flowforge/dataset.hpp"
#include "flowforge/evalbench.hpp"
#include "flowforge/trainer.hpp"

namespace flowforge {

/// Configuration error carrying the offending section.key path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key_path, const std::string& message)
      : std::runtime_error(key_path + ": " + message), key_path_(key_path) {}
  const std::string& key_path() const { return key_path_; }

 private:
  std::string key_path_;
};

class MissingInputError : public std::runtime_error {
 public:
  explicit MissingInputError(const std::string& message) : std::runtime_error(message) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& message) : std::runtime_error(message) {}
};

struct PretrainSettings {
  std::size_t corpus = 500;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double lr_final_fraction = 0.1;
  // wrong_gravity is left out of the pretrain default: corrupted falls make
  // sampled clips unscorable under gravity, which starves that dimension's
  // eval of valid samples and turns its score into noise.
  DefectConfig defects{0.5,
                       {DefectKind::kTeleport, DefectKind::kVanish, DefectKind::kShuffleOrder,
                        DefectKind::kDriftCamera},
                       0.3,
                       0};
};

/// Resolved run configuration: one section per module plus the global seed
/// and worker pool. Loaded from the plain-text `key = value` format described
/// in the README; unknown sections or keys are rejected with their path.
struct RunConfig {
  std::uint64_t seed = 42;
  std::size_t workers = 1;
  WorldConfig world;
  ModelConfig model;
  SamplerConfig sampler;
  ScorerConfig scorer;
  LossConfig loss;
  TrainConfig train;
  EvalConfig eval;
  DataMixConfig mix;
  PretrainSettings pretrain;
  std::vector<std::pair<std::string, std::vector<Dimension>>> groups{
      {"dynamics", {Dimension::kMotionRationality, Dimension::kDynamicSpatial, Dimension::kCameraMotion}},
      {"matter", {Dimension::kInstancePreservation, Dimension::kMechanicsGravity}},
  };

  /// Applies one `section.key=value` override (the --set flag).
  void apply_override(const std::string& assignment);

  /// Propagates the global seed and shared sub-configs, then validates
  /// everything. Must be called after parsing and overrides.
  void finalize();

  std::string serialize() const;

  static RunConfig load(const std::filesystem::path& path);
  static RunConfig parse(const std::string& text);
};

}  // namespace flowforge
