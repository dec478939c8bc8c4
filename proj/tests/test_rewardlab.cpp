// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "flowforge/promptengine.hpp"
#include "flowforge/rewardlab.hpp"
#include "flowforge/rng.hpp"

using namespace flowforge;

namespace {

PromptSpec spec_of(Dimension dim, std::uint64_t seed) { return gen_base_prompts(dim, 1, seed)[0]; }

// Maximal-violation constructions, one per dimension.
VideoTrajectory violation_for(Dimension dim, const PromptSpec& spec, std::uint64_t seed) {
  WorldConfig world;
  Rng rng(seed);
  VideoTrajectory traj;
  traj.world = world;
  traj.frames.assign(world.frames, std::vector<ObjectState>(world.objects));
  switch (dim) {
    case Dimension::kMotionRationality: {
      // Every object jumps 0.3 every frame.
      for (std::size_t k = 0; k < world.objects; ++k) {
        double x0 = rng.uniform(0.2, 0.45);
        double y0 = rng.uniform(0.2, 0.8);
        for (std::size_t t = 0; t < world.frames; ++t) {
          double x = t % 2 == 0 ? x0 : x0 + 0.3;
          traj.frames[t][k] = ObjectState{x, y0, 0.06, 0.8};
        }
      }
      break;
    }
    case Dimension::kInstancePreservation: {
      // All intensities zero while the prompt asks for objects.
      for (std::size_t t = 0; t < world.frames; ++t) {
        for (std::size_t k = 0; k < world.objects; ++k) {
          traj.frames[t][k] = ObjectState{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), 0.06, 0.0};
        }
      }
      break;
    }
    case Dimension::kMechanicsGravity: {
      // Zero gravity: the ball hangs in the air.
      double x = rng.uniform(0.2, 0.8), y = rng.uniform(0.5, 0.9);
      for (std::size_t t = 0; t < world.frames; ++t) {
        traj.frames[t][0] = ObjectState{x, y, 0.06, 0.8};
        traj.frames[t][1] = ObjectState{0.1, 0.1, 0.06, 0.0};
        traj.frames[t][2] = ObjectState{0.9, 0.1, 0.06, 0.0};
      }
      break;
    }
    case Dimension::kDynamicSpatial: {
      // Ordering inverted every frame with a wide margin.
      for (std::size_t t = 0; t < world.frames; ++t) {
        for (std::size_t k = 0; k < world.objects; ++k) {
          traj.frames[t][k] = ObjectState{0.5, 0.5, 0.06, 0.8};
        }
        auto a = static_cast<std::size_t>(spec.pair_a);
        auto b = static_cast<std::size_t>(spec.pair_b);
        switch (spec.relation) {
          case SpatialRelation::kLeftOf: traj.frames[t][a].x = 0.8; traj.frames[t][b].x = 0.2; break;
          case SpatialRelation::kRightOf: traj.frames[t][a].x = 0.2; traj.frames[t][b].x = 0.8; break;
          case SpatialRelation::kAbove: traj.frames[t][a].y = 0.2; traj.frames[t][b].y = 0.8; break;
          case SpatialRelation::kBelow: traj.frames[t][a].y = 0.8; traj.frames[t][b].y = 0.2; break;
        }
      }
      break;
    }
    case Dimension::kCameraMotion: {
      // Steady pan exactly opposite the prompted heading.
      auto dir = compass_vector(spec.direction);
      double speed = 0.03;
      for (std::size_t k = 0; k < world.objects; ++k) {
        double x0 = 0.5 + 0.25 * dir[0] + rng.uniform(-0.1, 0.1);
        double y0 = 0.5 + 0.25 * dir[1] + rng.uniform(-0.1, 0.1);
        for (std::size_t t = 0; t < world.frames; ++t) {
          traj.frames[t][k] = ObjectState{x0 - speed * dir[0] * static_cast<double>(t),
                                          y0 - speed * dir[1] * static_cast<double>(t), 0.06, 0.8};
        }
      }
      break;
    }
  }
  traj.validate();
  return traj;
}

}  // namespace

TEST_CASE("hard scorer endpoints per dimension") {
  ScorerConfig cfg;
  // Gravity prompted but no acceleration: relative error 1 -> value 0, valid.
  PromptSpec g = spec_of(Dimension::kMechanicsGravity, 1);
  VideoTrajectory zero_g = violation_for(Dimension::kMechanicsGravity, g, 2);
  RewardScore s = score_hard(Dimension::kMechanicsGravity, zero_g, g, cfg);
  CHECK(s.valid);
  CHECK(s.value == 0.0);

  // Static scene under a camera prompt: unscorable.
  PromptSpec c = spec_of(Dimension::kCameraMotion, 3);
  VideoTrajectory still;
  still.world = WorldConfig{};
  still.frames.assign(16, std::vector<ObjectState>(3, ObjectState{0.4, 0.4, 0.06, 0.8}));
  CHECK_FALSE(score_hard(Dimension::kCameraMotion, still, c, cfg).valid);

  // Spec/dimension mismatch is rejected.
  CHECK_THROWS_AS(score_hard(Dimension::kMotionRationality, still, c, cfg), std::invalid_argument);
}

TEST_CASE("oracles score >= 0.99 and violations <= 0.01, hard and soft agree within 0.1") {
  ScorerConfig cfg;
  for (Dimension dim : kAllDimensions) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      PromptSpec spec = spec_of(dim, derive_seed(seed, "rl-prompt", static_cast<std::uint64_t>(dim)));
      VideoTrajectory oracle = simulate(spec, derive_seed(seed, "rl-sim", static_cast<std::uint64_t>(dim)));
      RewardScore hard = score_hard(dim, oracle, spec, cfg);
      REQUIRE(hard.valid);
      CHECK(hard.value >= 0.99);
      double soft = score_soft_value(dim, encode(oracle), spec, cfg);
      CHECK(std::abs(soft - hard.value) < 0.1);

      VideoTrajectory bad = violation_for(dim, spec, derive_seed(seed, "rl-bad", static_cast<std::uint64_t>(dim)));
      RewardScore hard_bad = score_hard(dim, bad, spec, cfg);
      REQUIRE(hard_bad.valid);
      CHECK(hard_bad.value <= 0.01);
      double soft_bad = score_soft_value(dim, encode(bad), spec, cfg);
      CHECK(std::abs(soft_bad - hard_bad.value) < 0.1);
    }
  }
}

TEST_CASE("soft scores are finite and inside [0,1] even on degenerate latents") {
  ScorerConfig cfg;
  WorldConfig world;
  for (Dimension dim : kAllDimensions) {
    PromptSpec spec = spec_of(dim, 7);
    double v = score_soft_value(dim, Tensor::zeros({world.latent_dim()}), spec, cfg);
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

namespace {

/// Probe latents held near the scorer thresholds, where the sigmoids are in
/// their informative band (far from them the indicators saturate to exactly
/// 0 or 1 in double precision and the true gradient is zero).
Tensor near_threshold_probe(Dimension dim, const PromptSpec& spec, const ScorerConfig& cfg, const WorldConfig& world) {
  VideoTrajectory oracle = simulate(spec, 13, world);
  Tensor latent = encode(oracle);
  Rng rng(17);
  switch (dim) {
    case Dimension::kMotionRationality:
    case Dimension::kDynamicSpatial:
      for (double& v : latent.mutable_data()) v += rng.uniform(-0.05, 0.05);
      break;
    case Dimension::kInstancePreservation:
      // Hold one object's intensity just above the presence threshold.
      for (std::size_t t = 0; t < world.frames; ++t) {
        latent[latent_index(t, 0, 3, world)] = 2.0 * (cfg.a_min + 0.01 * rng.uniform(0.5, 1.5)) - 1.0;
      }
      break;
    case Dimension::kMechanicsGravity:
      // Perturb the estimation window gently enough to stay inside the tent.
      for (std::size_t t = 0; t < 5; ++t) {
        latent[latent_index(t, 0, 1, world)] += rng.uniform(-0.2, 0.2) * spec.gravity;
      }
      break;
    case Dimension::kCameraMotion: {
      // Shrink the pan so the mean drift sits near the scorability gate.
      double beta = (0.6 * cfg.eps_cam) / spec.speed;
      for (std::size_t t = 1; t < world.frames; ++t) {
        for (std::size_t k = 0; k < world.objects; ++k) {
          for (std::size_t f = 0; f < 2; ++f) {
            std::size_t i0 = latent_index(0, k, f, world);
            std::size_t it = latent_index(t, k, f, world);
            latent[it] = latent[i0] + beta * (latent[it] - latent[i0]);
          }
        }
      }
      break;
    }
  }
  return latent;
}

}  // namespace

TEST_CASE("soft scorer gradients match finite differences") {
  ScorerConfig cfg;
  WorldConfig world;
  for (Dimension dim : kAllDimensions) {
    PromptSpec spec = spec_of(dim, 11);
    Tensor latent = near_threshold_probe(dim, spec, cfg, world);

    Graph g;
    NodeId z = g.leaf(latent, true);
    NodeId s = score_soft(g, dim, z, spec, cfg, world);
    g.backward(s);
    Tensor analytic = g.grad(z);
    bool any_nonzero = false;
    for (double v : analytic.data()) {
      CHECK(std::isfinite(v));
      any_nonzero = any_nonzero || v != 0.0;
    }
    CHECK_MESSAGE(any_nonzero, "dimension ", dimension_name(dim));
    auto f = [&](const Tensor& probe) { return score_soft_value(dim, probe, spec, cfg, world); };
    CHECK(finite_diff_check(f, latent, analytic, 1e-6) < 1e-3);
  }
}

TEST_CASE("scoring is a pure function of trajectory, spec, and config") {
  ScorerConfig cfg;
  PromptSpec spec = spec_of(Dimension::kMotionRationality, 19);
  VideoTrajectory traj = simulate(spec, 23);
  RewardScore a = score_hard(Dimension::kMotionRationality, traj, spec, cfg);
  RewardScore b = score_hard(Dimension::kMotionRationality, traj, spec, cfg);
  CHECK(a.value == b.value);
  CHECK(a.valid == b.valid);
}

TEST_CASE("estimate_spec_for gates unscorable clips") {
  ScorerConfig cfg;
  VideoTrajectory still;
  still.world = WorldConfig{};
  still.frames.assign(16, std::vector<ObjectState>(3, ObjectState{0.4, 0.4, 0.06, 0.8}));
  CHECK_FALSE(estimate_spec_for(Dimension::kCameraMotion, still, cfg).has_value());
  CHECK(estimate_spec_for(Dimension::kMotionRationality, still, cfg).has_value());
  // Constant-velocity motion shows no gravity signature.
  PromptSpec m = spec_of(Dimension::kMotionRationality, 29);
  VideoTrajectory motion = simulate(m, 31);
  CHECK_FALSE(estimate_spec_for(Dimension::kMechanicsGravity, motion, cfg).has_value());
  // A gravity oracle is estimable and scores ~1 against its own estimate.
  PromptSpec g = spec_of(Dimension::kMechanicsGravity, 37);
  VideoTrajectory fall = simulate(g, 41);
  auto est = estimate_spec_for(Dimension::kMechanicsGravity, fall, cfg);
  REQUIRE(est.has_value());
  CHECK(score_hard(Dimension::kMechanicsGravity, fall, *est, cfg).value >= 0.99);
}

namespace {

std::filesystem::path temp_dataset(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

std::vector<DatasetRecord> oracle_records(Dimension dim, std::size_t n, std::uint64_t seed) {
  std::vector<DatasetRecord> records;
  for (std::size_t i = 0; i < n; ++i) {
    PromptSpec spec = gen_base_prompts(dim, 1, derive_seed(seed, "ds-prompt", i))[0];
    VideoTrajectory traj = simulate(spec, derive_seed(seed, "ds-sim", i));
    DatasetRecord rec;
    rec.id = i;
    rec.source = Source::kPrVr;
    rec.spec = caption_from_trajectory(traj);
    rec.latent = encode(traj);
    rec.real_latent = rec.latent;
    rec.gen_seed = i;
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

TEST_CASE("score_dataset is idempotent, caches, and scores oracles high") {
  ScorerConfig cfg;
  auto in_path = temp_dataset("ff_score_in.ffds");
  auto out_path = temp_dataset("ff_score_out.ffds");
  auto out2_path = temp_dataset("ff_score_out2.ffds");

  DataMixConfig mix;
  mix.include = {Source::kPrVr};
  mix.count_prvr = 12;
  mix.target_dimensions = {Dimension::kMechanicsGravity};
  auto records = oracle_records(Dimension::kMechanicsGravity, 12, 5);
  write_dataset(in_path, mix, records);

  ScoreSummary s1 = score_dataset(in_path, out_path, cfg, {Dimension::kMechanicsGravity});
  CHECK(s1.n_records == 12);
  CHECK(s1.n_valid == 12);
  DatasetFile scored = read_dataset(out_path);
  for (const DatasetRecord& rec : scored.records) {
    REQUIRE(rec.reward.has_value());
    CHECK(rec.reward->valid);
    CHECK(rec.reward->value >= 0.99);  // oracle property carried through the file
  }

  // Re-scoring the scored file hits the cache and produces identical bytes.
  ScoreSummary s2 = score_dataset(out_path, out2_path, cfg, {Dimension::kMechanicsGravity});
  CHECK(s2.cache_hits == 12);
  std::ifstream f1(out_path), f2(out2_path);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  // A changed config hash invalidates the cache.
  ScorerConfig other = cfg;
  other.delta_max = 0.1;
  ScoreSummary s3 = score_dataset(out_path, out2_path, other, {Dimension::kMechanicsGravity});
  CHECK(s3.cache_hits == 0);
  CHECK(s3.cache_invalidated);

  std::filesystem::remove(in_path);
  std::filesystem::remove(out_path);
  std::filesystem::remove(out2_path);
  std::filesystem::remove(out_path.string() + ".scores");
  std::filesystem::remove(out2_path.string() + ".scores");
}

TEST_CASE("cross-dimension scoring marks unscorable records invalid") {
  ScorerConfig cfg;
  auto in_path = temp_dataset("ff_cross_in.ffds");
  auto out_path = temp_dataset("ff_cross_out.ffds");
  DataMixConfig mix;
  mix.include = {Source::kPrVr};
  mix.count_prvr = 10;
  mix.target_dimensions = {Dimension::kCameraMotion};
  // Instance clips drift below the camera gate: not scorable as camera.
  auto records = oracle_records(Dimension::kInstancePreservation, 10, 7);
  write_dataset(in_path, mix, records);
  ScoreSummary s = score_dataset(in_path, out_path, cfg, {Dimension::kCameraMotion});
  CHECK(s.n_valid == 0);
  std::filesystem::remove(in_path);
  std::filesystem::remove(out_path);
  std::filesystem::remove(out_path.string() + ".scores");
}

TEST_CASE("filter keeps exactly the valid positive records in order") {
  std::vector<DatasetRecord> records = oracle_records(Dimension::kMotionRationality, 3, 11);
  records[0].reward = RewardScore{0.9, true};
  records[1].reward = RewardScore{0.0, true};
  records[2].reward = RewardScore{0.7, false};
  auto kept = filter_records(records);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].id == records[0].id);

  for (DatasetRecord& rec : records) rec.reward = RewardScore{0.5, true};
  CHECK(filter_records(records).size() == 3);

  records[1].reward.reset();
  CHECK_THROWS_AS(filter_records(records), std::invalid_argument);
}

TEST_CASE("scorer config hash changes with any parameter") {
  ScorerConfig a, b;
  CHECK(a.hash() == b.hash());
  b.softness = 30.0;
  CHECK(a.hash() != b.hash());
}
