// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "flowforge/autodiff.hpp"
#include "flowforge/dataset.hpp"
#include "flowforge/flowmatch.hpp"
#include "flowforge/rewardlab.hpp"
#include "flowforge/velocity_model.hpp"

namespace flowforge {

enum class Strategy { kSft, kSftFiltered, kReweightOffline, kReweightOnline, kBackpropOnline };

std::string_view strategy_name(Strategy s);
Strategy strategy_from_name(std::string_view name);

enum class KlMode { kPointwise, kGaussianMoment };
enum class OptimizerKind { kSgd, kAdam };

struct LossConfig {
  double lambda_ps = 0.5;
  double lambda_pr = 0.5;
  double lambda_kl = 0.3;
  KlMode kl_mode = KlMode::kPointwise;

  void validate() const;
};

/// The paper-scale learning rate, kept as a named preset; it targets a much
/// larger model and will not move this one in a single epoch.
inline constexpr double kPaperLearningRate = 1e-6;

struct TrainConfig {
  Strategy strategy = Strategy::kReweightOffline;
  std::size_t batch_size = 4;
  std::size_t epochs = 1;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Online strategies estimate the clean latent from the drawn t: 0 uses the
  /// single-step u + z0; k > 0 refines with a k-step Euler solve from (z_t, t).
  std::size_t online_sampler_steps = 8;
  /// Pretraining mode: every record routes through the plain flow loss
  /// regardless of source tag (no realism term).
  bool route_all_ps = false;
  /// Linear learning-rate decay across all steps down to lr * this fraction;
  /// 1.0 keeps the rate constant.
  double lr_final_fraction = 1.0;
  /// Per-sample forward/backward passes fan out to this many workers;
  /// gradients reduce in sample order, so results match the 1-worker run
  /// bit for bit.
  std::size_t workers = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainReport {
  std::vector<double> step_losses;
  std::vector<double> epoch_seconds;
  std::string checkpoint_path;
  std::size_t samples_used = 0;
  std::size_t samples_filtered = 0;
};

/// Reward-weighted flow loss over synthetic-video records: per record draw
/// t ~ U[0,1] and z0 ~ N(0,I) from the draw seed, then r * fm_loss(u, vt)
/// with z1 = record.latent; batch mean. Rewards are constants: no gradient
/// flows through them, and zero-reward records contribute exactly zero
/// gradient.
NodeId loss_ps(Graph& graph, const BoundModel& model, const std::vector<const DatasetRecord*>& batch,
               const LossConfig& cfg, std::uint64_t draw_seed);

/// Realism divergence between predicted clean latents and real latents.
/// pointwise: 0.5 * mean squared difference. gaussian_moment: closed-form KL
/// between diagonal Gaussians fitted over the batch (>= 2 records), variance
/// floor 1e-6.
NodeId kl_realism(Graph& graph, const std::vector<NodeId>& pred_clean, const std::vector<Tensor>& real, KlMode mode);

/// Real-pair loss: flow target is the real latent while the reward was scored
/// on the paired synthetic video, plus lambda_kl times the realism term on
/// the one-step predicted clean latent. Batch mean; in gaussian_moment mode
/// the KL is computed once over the batch.
NodeId loss_pr(Graph& graph, const BoundModel& model, const std::vector<const DatasetRecord*>& batch,
               const LossConfig& cfg, std::uint64_t draw_seed);

/// lambda_ps * loss_ps + lambda_pr * loss_pr; an absent part contributes 0;
/// both absent is an error.
NodeId total_loss(Graph& graph, const BoundModel& model, const std::vector<const DatasetRecord*>& ps_batch,
                  const std::vector<const DatasetRecord*>& pr_batch, const LossConfig& cfg, std::uint64_t draw_seed);

struct GradSet {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
};

GradSet collect_grads(const Graph& graph, const BoundModel& model);

struct AdamState {
  std::vector<Tensor> m_w, v_w, m_b, v_b;
  std::uint64_t step = 0;

  static AdamState init_like(const ModelParams& params);
};

/// Standard bias-corrected Adam update; zero gradients leave parameters
/// bit-identical.
void adam_step(ModelParams& params, const GradSet& grads, AdamState& state, double lr, double beta1, double beta2,
               double eps);

void sgd_step(ModelParams& params, const GradSet& grads, double lr);

/// Runs one fine-tuning strategy over the dataset. Strategies:
///   sft              rewards forced to 1, full dataset
///   sft_filtered     validity/zero filter first, then rewards forced to 1
///   reweight_offline validity/zero filter, cached rewards as weights
///   reweight_online  validity/zero filter, weight re-scored each step from
///                    the predicted clean latent (no gradient through it)
///   backprop_online  validity/zero filter, unit weights plus a differentiable
///                    -mean(score_soft(predicted_clean)) term (coefficient 1)
/// Deterministic per cfg.seed in single-worker mode.
std::pair<ModelParams, TrainReport> train(const std::vector<DatasetRecord>& dataset, const ModelParams& init,
                                          const TrainConfig& train_cfg, const LossConfig& loss_cfg,
                                          const std::vector<Dimension>& targets, const ScorerConfig& scorer_cfg,
                                          const WorldConfig& world = {});

void write_train_report(const std::filesystem::path& path, const TrainReport& report, const TrainConfig& cfg);

}  // namespace flowforge
