// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include "flowforge/rewardlab.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "flowforge/hash.hpp"
#include "flowforge/parallel.hpp"

namespace flowforge {

namespace {

double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

void ScorerConfig::validate() const {
  if (!(delta_max > 0.0 && a_min > 0.0 && eps_cam > 0.0 && softness > 0.0)) {
    throw std::invalid_argument("scorer config: all parameters must be positive");
  }
}

std::string ScorerConfig::canonical_string() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "a_min=%.17g;delta_max=%.17g;eps_cam=%.17g;softness=%.17g", a_min, delta_max,
                eps_cam, softness);
  return buf;
}

std::uint64_t ScorerConfig::hash() const { return fnv1a64(canonical_string()); }

RewardScore score_hard(Dimension dimension, const VideoTrajectory& traj, const PromptSpec& spec,
                       const ScorerConfig& cfg) {
  cfg.validate();
  traj.validate();
  if (spec.dimension != dimension) {
    throw std::invalid_argument("score_hard: spec dimension does not match requested dimension");
  }
  std::size_t T = traj.frames.size();
  std::size_t K = traj.world.objects;
  RewardScore score;
  switch (dimension) {
    case Dimension::kMotionRationality: {
      // Judged over the objects actually in the scene; a clip showing
      // nothing exhibits no rational motion and scores zero.
      auto slots = present_slots(traj, cfg.a_min);
      if (slots.empty()) {
        score.value = 0.0;
        score.valid = true;
        break;
      }
      std::size_t ok = 0, total = 0;
      for (std::size_t t = 0; t + 1 < T; ++t) {
        for (std::size_t k : slots) {
          double dx = traj.frames[t + 1][k].x - traj.frames[t][k].x;
          double dy = traj.frames[t + 1][k].y - traj.frames[t][k].y;
          if (std::sqrt(dx * dx + dy * dy) <= cfg.delta_max) ++ok;
          ++total;
        }
      }
      score.value = static_cast<double>(ok) / static_cast<double>(total);
      score.valid = true;
      break;
    }
    case Dimension::kInstancePreservation: {
      std::size_t ok = 0;
      for (const auto& frame : traj.frames) {
        int c = 0;
        for (const ObjectState& s : frame) {
          if (s.a >= cfg.a_min) ++c;
        }
        if (c == spec.object_count) ++ok;
      }
      score.value = static_cast<double>(ok) / static_cast<double>(T);
      score.valid = true;
      break;
    }
    case Dimension::kMechanicsGravity: {
      GravityEstimate est = estimate_gravity(traj, 0);
      score.valid = est.valid;
      if (est.valid) {
        score.value = clampd(1.0 - std::abs(est.g_hat - spec.gravity) / spec.gravity, 0.0, 1.0);
      }
      break;
    }
    case Dimension::kDynamicSpatial: {
      auto a = static_cast<std::size_t>(spec.pair_a);
      auto b = static_cast<std::size_t>(spec.pair_b);
      if (a >= K || b >= K) throw std::invalid_argument("score_hard: spatial pair outside world slots");
      std::size_t ok = 0;
      for (const auto& frame : traj.frames) {
        bool holds = false;
        switch (spec.relation) {
          case SpatialRelation::kLeftOf: holds = frame[a].x < frame[b].x; break;
          case SpatialRelation::kRightOf: holds = frame[a].x > frame[b].x; break;
          case SpatialRelation::kAbove: holds = frame[a].y > frame[b].y; break;
          case SpatialRelation::kBelow: holds = frame[a].y < frame[b].y; break;
        }
        if (holds) ++ok;
      }
      score.value = static_cast<double>(ok) / static_cast<double>(T);
      score.valid = true;
      break;
    }
    case Dimension::kCameraMotion: {
      auto drift = mean_drift(traj);
      double norm = std::sqrt(drift[0] * drift[0] + drift[1] * drift[1]);
      if (norm < cfg.eps_cam) {
        score.valid = false;
        break;
      }
      auto dir = compass_vector(spec.direction);
      double cosine = (drift[0] * dir[0] + drift[1] * dir[1]) / norm;
      score.value = clampd(cosine, 0.0, 1.0);
      score.valid = true;
      break;
    }
  }
  if (score.valid) score.value = clampd(score.value, 0.0, 1.0);
  return score;
}

namespace {

/// Constant selection matrix that gathers one field of every (frame, object)
/// slot: row (t*K + k) picks latent index of (t, k, field).
Tensor field_selector(const WorldConfig& world, std::size_t field) {
  std::size_t rows = world.frames * world.objects;
  std::size_t cols = world.latent_dim();
  std::vector<double> m(rows * cols, 0.0);
  for (std::size_t t = 0; t < world.frames; ++t) {
    for (std::size_t k = 0; k < world.objects; ++k) {
      std::size_t row = t * world.objects + k;
      m[row * cols + latent_index(t, k, field, world)] = 1.0;
    }
  }
  return Tensor({rows, cols}, std::move(m));
}

/// Row t sums the entries of frame t in a [T*K] gather.
Tensor frame_sum_matrix(const WorldConfig& world) {
  std::size_t rows = world.frames;
  std::size_t cols = world.frames * world.objects;
  std::vector<double> m(rows * cols, 0.0);
  for (std::size_t t = 0; t < world.frames; ++t) {
    for (std::size_t k = 0; k < world.objects; ++k) m[t * cols + t * world.objects + k] = 1.0;
  }
  return Tensor({rows, cols}, std::move(m));
}

/// Gathers one field of one slot across frames: row t -> latent (t, slot,
/// field).
Tensor slot_selector(const WorldConfig& world, std::size_t slot, std::size_t field, std::size_t frames) {
  std::size_t cols = world.latent_dim();
  std::vector<double> m(frames * cols, 0.0);
  for (std::size_t t = 0; t < frames; ++t) m[t * cols + latent_index(t, slot, field, world)] = 1.0;
  return Tensor({frames, cols}, std::move(m));
}

/// clamp(x, 0, 1) built from relu; gradients stay finite (and zero beyond the
/// clamp), which is all the surrogate needs.
NodeId clamp01(Graph& g, NodeId x) {
  return g.sub(g.relu(x), g.relu(g.sub(x, g.constant(Tensor::scalar(1.0)))));
}

/// Difference selector: row (t*K + k) reads latent(t+1,k,field) - latent(t,k,field).
Tensor step_selector(const WorldConfig& world, std::size_t field) {
  std::size_t rows = (world.frames - 1) * world.objects;
  std::size_t cols = world.latent_dim();
  std::vector<double> m(rows * cols, 0.0);
  for (std::size_t t = 0; t + 1 < world.frames; ++t) {
    for (std::size_t k = 0; k < world.objects; ++k) {
      std::size_t row = t * world.objects + k;
      m[row * cols + latent_index(t + 1, k, field, world)] = 1.0;
      m[row * cols + latent_index(t, k, field, world)] = -1.0;
    }
  }
  return Tensor({rows, cols}, std::move(m));
}

/// Mean intensity of each slot across frames, as a [K] or [K,1] node.
NodeId mean_intensity_per_slot(Graph& g, NodeId latent, const WorldConfig& world) {
  std::size_t cols = world.latent_dim();
  std::size_t K = world.objects;
  std::vector<double> m(K * cols, 0.0);
  double w = 0.5 / static_cast<double>(world.frames);  // latent a -> world a, frame mean
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t t = 0; t < world.frames; ++t) m[k * cols + latent_index(t, k, 3, world)] = w;
  }
  NodeId scaled = g.matmul(g.constant(Tensor({K, cols}, std::move(m))), latent);
  return g.add(scaled, g.constant(Tensor::scalar(0.5)));
}

NodeId soft_motion(Graph& g, NodeId latent, const PromptSpec& spec, const ScorerConfig& cfg,
                   const WorldConfig& world) {
  std::size_t K = world.objects;
  std::size_t T = world.frames;
  NodeId dx = g.matmul(g.constant(step_selector(world, 0)), latent);
  NodeId dy = g.matmul(g.constant(step_selector(world, 1)), latent);
  // World displacement is half the latent displacement, so squared world
  // displacement carries a factor 1/4.
  NodeId disp2 = g.scale(g.add(g.square(dx), g.square(dy)), 0.25);
  double threshold2 = cfg.delta_max * cfg.delta_max;
  NodeId margin = g.sub(g.constant(Tensor::scalar(threshold2)), disp2);
  NodeId ind = g.sigmoid(g.scale(margin, cfg.softness / threshold2));  // [(T-1)*K]
  // Weight each pair by its object's presence; normalize by the prompted
  // count (the denominator the hard scorer uses whenever the clip shows the
  // prompted objects).
  NodeId presence = g.sigmoid(
      g.scale(g.sub(mean_intensity_per_slot(g, latent, world), g.constant(Tensor::scalar(cfg.a_min))),
              cfg.softness / cfg.a_min));  // [K]
  std::size_t rows = (T - 1) * K;
  std::vector<double> tile(rows * K, 0.0);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t k = 0; k < K; ++k) tile[(t * K + k) * K + k] = 1.0;
  }
  NodeId presence_tiled = g.matmul(g.constant(Tensor({rows, K}, std::move(tile))), presence);
  NodeId weighted = g.mul(ind, presence_tiled);
  double denom = static_cast<double>((T - 1) * static_cast<std::size_t>(spec.object_count));
  // Clips showing more objects than prompted would otherwise push past 1.
  return clamp01(g, g.scale(g.sum(weighted), 1.0 / denom));
}

NodeId soft_instance(Graph& g, NodeId latent, const PromptSpec& spec, const ScorerConfig& cfg,
                     const WorldConfig& world) {
  NodeId a_lat = g.matmul(g.constant(field_selector(world, 3)), latent);
  NodeId a_world = g.add(g.scale(a_lat, 0.5), g.constant(Tensor::scalar(0.5)));
  NodeId presence =
      g.sigmoid(g.scale(g.sub(a_world, g.constant(Tensor::scalar(cfg.a_min))), cfg.softness / cfg.a_min));
  NodeId counts = g.matmul(g.constant(frame_sum_matrix(world)), presence);
  double n = static_cast<double>(spec.object_count);
  NodeId above = g.sigmoid(g.scale(g.sub(counts, g.constant(Tensor::scalar(n - 0.5))), cfg.softness / 0.5));
  NodeId below = g.sigmoid(g.scale(g.sub(g.constant(Tensor::scalar(n + 0.5)), counts), cfg.softness / 0.5));
  return g.mean(g.mul(above, below));
}

NodeId soft_gravity(Graph& g, NodeId latent, const PromptSpec& spec, const ScorerConfig& cfg,
                    const WorldConfig& world) {
  // Fixed early window: 5 frames give 3 interior second differences, all
  // pre-bounce for every in-range drop (drop_height >= 0.7, g <= 0.05).
  constexpr std::size_t kWindow = 5;
  NodeId y5 = g.matmul(g.constant(slot_selector(world, 0, 1, kWindow)), latent);
  std::vector<double> d((kWindow - 2) * kWindow, 0.0);
  for (std::size_t t = 1; t + 1 < kWindow; ++t) {
    d[(t - 1) * kWindow + (t + 1)] = 1.0;
    d[(t - 1) * kWindow + t] = -2.0;
    d[(t - 1) * kWindow + (t - 1)] = 1.0;
  }
  NodeId diffs = g.matmul(g.constant(Tensor({kWindow - 2, kWindow}, std::move(d))), y5);
  // g_hat in world units: latent y is 2*world - 1, so halve and negate.
  NodeId g_hat = g.scale(g.mean(diffs), -0.5);
  NodeId err_rel = g.scale(g.sub(g_hat, g.constant(Tensor::scalar(spec.gravity))), 1.0 / spec.gravity);
  // |e| ~= e * tanh(softness * e); error of the approximation is O(1/softness).
  NodeId abs_rel = g.mul(err_rel, g.tanh(g.scale(err_rel, cfg.softness)));
  NodeId raw = g.sub(g.constant(Tensor::scalar(1.0)), abs_rel);
  return clamp01(g, raw);
}

NodeId soft_spatial(Graph& g, NodeId latent, const PromptSpec& spec, const ScorerConfig& cfg,
                    const WorldConfig& world) {
  std::size_t T = world.frames;
  auto a = static_cast<std::size_t>(spec.pair_a);
  auto b = static_cast<std::size_t>(spec.pair_b);
  std::size_t field = (spec.relation == SpatialRelation::kLeftOf || spec.relation == SpatialRelation::kRightOf) ? 0 : 1;
  NodeId va = g.matmul(g.constant(slot_selector(world, a, field, T)), latent);
  NodeId vb = g.matmul(g.constant(slot_selector(world, b, field, T)), latent);
  bool a_low = spec.relation == SpatialRelation::kLeftOf || spec.relation == SpatialRelation::kBelow;
  NodeId margin = a_low ? g.sub(vb, va) : g.sub(va, vb);
  // Latent separation is twice the world separation; fold the 1/2 into the
  // temperature so margins are in world units.
  return g.mean(g.sigmoid(g.scale(margin, 0.5 * cfg.softness)));
}

NodeId soft_camera(Graph& g, NodeId latent, const PromptSpec& spec, const ScorerConfig& cfg,
                   const WorldConfig& world) {
  std::size_t T = world.frames;
  std::size_t K = world.objects;
  std::size_t cols = world.latent_dim();
  double w = 0.5 / (static_cast<double>(K) * static_cast<double>(T - 1));
  std::vector<double> mx(cols, 0.0), my(cols, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    mx[latent_index(T - 1, k, 0, world)] += w;
    mx[latent_index(0, k, 0, world)] -= w;
    my[latent_index(T - 1, k, 1, world)] += w;
    my[latent_index(0, k, 1, world)] -= w;
  }
  NodeId dbar_x = g.matmul(g.constant(Tensor({1, cols}, std::move(mx))), latent);
  NodeId dbar_y = g.matmul(g.constant(Tensor({1, cols}, std::move(my))), latent);
  auto dir = compass_vector(spec.direction);
  NodeId proj = g.add(g.scale(dbar_x, dir[0]), g.scale(dbar_y, dir[1]));
  // Alignment indicator centered halfway to the scorability gate: fully
  // aligned drifts read ~1, anti-aligned ~0, static scenes ~0.
  NodeId margin = g.sub(proj, g.constant(Tensor::scalar(0.5 * cfg.eps_cam)));
  return g.sigmoid(g.scale(margin, cfg.softness / cfg.eps_cam));
}

}  // namespace

NodeId score_soft(Graph& graph, Dimension dimension, NodeId latent, const PromptSpec& spec, const ScorerConfig& cfg,
                  const WorldConfig& world) {
  cfg.validate();
  if (spec.dimension != dimension) {
    throw std::invalid_argument("score_soft: spec dimension does not match requested dimension");
  }
  if (graph.value(latent).size() != world.latent_dim()) {
    throw std::invalid_argument("score_soft: latent length does not match world");
  }
  switch (dimension) {
    case Dimension::kMotionRationality: return soft_motion(graph, latent, spec, cfg, world);
    case Dimension::kInstancePreservation: return soft_instance(graph, latent, spec, cfg, world);
    case Dimension::kMechanicsGravity: return soft_gravity(graph, latent, spec, cfg, world);
    case Dimension::kDynamicSpatial: return soft_spatial(graph, latent, spec, cfg, world);
    case Dimension::kCameraMotion: return soft_camera(graph, latent, spec, cfg, world);
  }
  throw std::invalid_argument("score_soft: unknown dimension");
}

double score_soft_value(Dimension dimension, const Tensor& latent, const PromptSpec& spec, const ScorerConfig& cfg,
                        const WorldConfig& world) {
  Graph g;
  NodeId z = g.constant(latent);
  return g.value(score_soft(g, dimension, z, spec, cfg, world))[0];
}

std::optional<PromptSpec> estimate_spec_for(Dimension target, const VideoTrajectory& traj, const ScorerConfig& cfg) {
  traj.validate();
  PresenceStats stats = presence_stats(traj, cfg.a_min);
  auto present = present_slots(traj, cfg.a_min);
  PromptSpec spec;
  spec.dimension = target;
  switch (target) {
    case Dimension::kMotionRationality:
      spec.object_count = std::min(3, std::max(1, stats.modal_count));
      spec.speed = clampd(mean_step_length(traj, present), PromptRanges::kMotionSpeedLo, PromptRanges::kMotionSpeedHi);
      return spec;
    case Dimension::kInstancePreservation:
      if (stats.modal_count < 1) return std::nullopt;
      spec.object_count = std::min(3, stats.modal_count);
      spec.speed =
          clampd(mean_step_length(traj, present), PromptRanges::kInstanceSpeedLo, PromptRanges::kInstanceSpeedHi);
      spec.intensity_base = 0.7;
      return spec;
    case Dimension::kMechanicsGravity: {
      GravityEstimate est = estimate_gravity(traj, 0);
      if (!est.valid || est.g_hat < 0.004 || est.g_hat > 0.06) return std::nullopt;
      spec.object_count = 1;
      spec.gravity = clampd(est.g_hat, PromptRanges::kGravityLo, PromptRanges::kGravityHi);
      spec.drop_height = clampd(traj.frames[0][0].y, PromptRanges::kDropHeightLo, PromptRanges::kDropHeightHi);
      return spec;
    }
    case Dimension::kDynamicSpatial: {
      if (present.size() < 2) return std::nullopt;
      double best_fraction = -1.0;
      for (std::size_t ii = 0; ii < present.size(); ++ii) {
        for (std::size_t jj = ii + 1; jj < present.size(); ++jj) {
          std::size_t i = present[ii], j = present[jj];
          std::array<std::size_t, 4> holds{0, 0, 0, 0};
          for (const auto& frame : traj.frames) {
            if (frame[i].x < frame[j].x) ++holds[0];
            if (frame[i].x > frame[j].x) ++holds[1];
            if (frame[i].y > frame[j].y) ++holds[2];
            if (frame[i].y < frame[j].y) ++holds[3];
          }
          for (int r = 0; r < 4; ++r) {
            double fraction = static_cast<double>(holds[static_cast<std::size_t>(r)]) /
                              static_cast<double>(traj.frames.size());
            if (fraction > best_fraction) {
              best_fraction = fraction;
              spec.relation = static_cast<SpatialRelation>(r);
              spec.pair_a = static_cast<int>(i);
              spec.pair_b = static_cast<int>(j);
            }
          }
        }
      }
      spec.object_count = std::min(3, std::max(2, static_cast<int>(present.size())));
      spec.speed = clampd(mean_step_length(traj, present), PromptRanges::kSpatialSpeedLo, PromptRanges::kSpatialSpeedHi);
      return spec;
    }
    case Dimension::kCameraMotion: {
      auto drift = mean_drift(traj);
      double norm = std::sqrt(drift[0] * drift[0] + drift[1] * drift[1]);
      if (norm < cfg.eps_cam) return std::nullopt;
      spec.object_count = 3;
      spec.direction = nearest_compass(drift[0], drift[1]);
      spec.speed = clampd(norm, PromptRanges::kCameraSpeedLo, PromptRanges::kCameraSpeedHi);
      return spec;
    }
  }
  return std::nullopt;
}

namespace {

struct CacheKey {
  std::uint64_t id;
  std::string dim;
  bool operator<(const CacheKey& o) const { return id != o.id ? id < o.id : dim < o.dim; }
};

std::map<CacheKey, RewardScore> read_cache(const std::filesystem::path& path, std::uint64_t want_hash,
                                           bool& invalidated) {
  std::map<CacheKey, RewardScore> cache;
  std::ifstream in(path);
  if (!in) return cache;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::uint64_t id = 0, hash = 0;
    std::string dim;
    double value = 0.0;
    int valid = 0;
    if (!(is >> id >> dim >> hash >> value >> valid)) continue;
    if (hash != want_hash) {
      invalidated = true;
      continue;
    }
    cache[{id, dim}] = RewardScore{value, valid != 0};
  }
  return cache;
}

void write_cache(const std::filesystem::path& path, std::uint64_t hash,
                 const std::vector<std::pair<CacheKey, RewardScore>>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("score cache: cannot open " + path.string());
  for (const auto& [key, score] : entries) {
    out << key.id << " " << key.dim << " " << hash << " " << format_double_roundtrip(score.value) << " "
        << (score.valid ? 1 : 0) << "\n";
  }
}

}  // namespace

ScoreSummary score_dataset(const std::filesystem::path& in_path, const std::filesystem::path& out_path,
                           const ScorerConfig& cfg, const std::vector<Dimension>& targets, std::size_t workers,
                           const WorldConfig& world) {
  cfg.validate();
  if (targets.empty()) throw std::invalid_argument("score_dataset: targets must be non-empty");
  DatasetFile file = read_dataset(in_path);

  std::uint64_t cfg_hash = cfg.hash();
  bool invalidated = false;
  auto cache = read_cache(in_path.string() + ".scores", cfg_hash, invalidated);
  if (invalidated) {
    std::cerr << "warning: score cache config hash changed; rebuilding cache\n";
  }

  auto target_of = [&](const DatasetRecord& rec) {
    for (Dimension d : targets) {
      if (rec.spec.dimension == d) return d;
    }
    return targets[0];
  };

  ScoreSummary summary;
  summary.n_records = file.records.size();
  summary.cache_invalidated = invalidated;
  std::vector<std::pair<CacheKey, RewardScore>> cache_entries(file.records.size());
  std::vector<std::size_t> hit_flags(file.records.size(), 0);

  parallel_for(file.records.size(), workers, [&](std::size_t i) {
    DatasetRecord& rec = file.records[i];
    Dimension dim = target_of(rec);
    CacheKey key{rec.id, std::string(dimension_name(dim))};
    auto found = cache.find(key);
    RewardScore score;
    if (found != cache.end()) {
      score = found->second;
      hit_flags[i] = 1;
    } else {
      VideoTrajectory traj = decode(rec.latent, world);
      if (rec.spec.dimension == dim) {
        score = score_hard(dim, traj, rec.spec, cfg);
      } else {
        auto est = estimate_spec_for(dim, traj, cfg);
        if (est.has_value()) {
          score = score_hard(dim, traj, *est, cfg);
        } else {
          score = RewardScore{0.0, false};
        }
      }
    }
    rec.reward = score;
    cache_entries[i] = {key, score};
  });

  for (std::size_t i = 0; i < file.records.size(); ++i) {
    summary.cache_hits += hit_flags[i];
    const RewardScore& r = *file.records[i].reward;
    if (r.valid) {
      ++summary.n_valid;
      if (r.value > 0.0) ++summary.n_positive;
    }
  }

  write_dataset(out_path, file.mix, file.records);
  write_cache(out_path.string() + ".scores", cfg_hash, cache_entries);
  return summary;
}

std::vector<DatasetRecord> filter_records(const std::vector<DatasetRecord>& records) {
  std::vector<DatasetRecord> kept;
  for (const DatasetRecord& rec : records) {
    if (!rec.reward.has_value()) {
      throw std::invalid_argument("filter: record " + std::to_string(rec.id) + " has no reward");
    }
    if (rec.reward->valid && rec.reward->value > 0.0) kept.push_back(rec);
  }
  return kept;
}

std::size_t filter_dataset(const std::filesystem::path& in_path, const std::filesystem::path& out_path) {
  DatasetFile file = read_dataset(in_path);
  auto kept = filter_records(file.records);
  write_dataset(out_path, file.mix, kept);
  if (kept.empty()) {
    std::cerr << "warning: filter kept zero records\n";
  }
  return kept.size();
}

}  // namespace flowforge
