// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include "flowforge/promptengine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "flowforge/rng.hpp"

namespace flowforge {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Caption-side thresholds. These are fixed documented constants, not scorer
// configuration: captions describe what a clip shows, independently of how
// strictly a reward pass later judges it.
constexpr double kCaptionPresence = 0.2;
constexpr double kCaptionGravityLo = 0.004;
constexpr double kCaptionGravityHi = 0.06;
constexpr double kCaptionCoherence = 1e-6;
constexpr double kCaptionCameraSpeed = 0.009;
constexpr double kCaptionPairSpeed = 0.002;
constexpr double kCaptionOrderMargin = 0.15;
constexpr double kCaptionPulseStd = 0.05;

double scale_to_unit(double v, double lo, double hi) { return (v - lo) / (hi - lo); }

double clampd(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

int count_word(int n, std::string& out) {
  switch (n) {
    case 1: out = "one"; break;
    case 2: out = "two"; break;
    default: out = "three"; break;
  }
  return n;
}

}  // namespace

Prompt make_prompt(const PromptSpec& spec) {
  spec.validate();
  return Prompt{spec, prompt_text(spec), encode_conditioning(spec)};
}

std::vector<PromptSpec> gen_base_prompts(Dimension dimension, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("gen_base_prompts: n must be >= 1");
  std::vector<PromptSpec> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, "prompt/base", i));
    PromptSpec spec;
    spec.dimension = dimension;
    spec.radius_base = rng.uniform(PromptRanges::kRadiusLo, PromptRanges::kRadiusHi);
    spec.intensity_base = rng.uniform(PromptRanges::kIntensityLo, PromptRanges::kIntensityHi);
    spec.layout_seed = rng.next_u64();
    spec.variant_id = 0;
    switch (dimension) {
      case Dimension::kMotionRationality:
        spec.object_count = rng.uniform_int(1, 3);
        spec.speed = rng.uniform(PromptRanges::kMotionSpeedLo, PromptRanges::kMotionSpeedHi);
        break;
      case Dimension::kInstancePreservation:
        spec.object_count = rng.uniform_int(1, 3);
        spec.speed = rng.uniform(PromptRanges::kInstanceSpeedLo, PromptRanges::kInstanceSpeedHi);
        spec.intensity_base = rng.uniform(PromptRanges::kInstanceIntensityLo, PromptRanges::kInstanceIntensityHi);
        break;
      case Dimension::kMechanicsGravity:
        spec.object_count = 1;
        spec.gravity = rng.uniform(PromptRanges::kGravityLo, PromptRanges::kGravityHi);
        spec.drop_height = rng.uniform(PromptRanges::kDropHeightLo, PromptRanges::kDropHeightHi);
        break;
      case Dimension::kDynamicSpatial: {
        spec.object_count = rng.uniform_int(2, 3);
        spec.relation = static_cast<SpatialRelation>(rng.uniform_int(0, 3));
        spec.pair_a = rng.uniform_int(0, spec.object_count - 1);
        spec.pair_b = rng.uniform_int(0, spec.object_count - 2);
        if (spec.pair_b >= spec.pair_a) ++spec.pair_b;
        spec.speed = rng.uniform(PromptRanges::kSpatialSpeedLo, PromptRanges::kSpatialSpeedHi);
        break;
      }
      case Dimension::kCameraMotion:
        spec.object_count = 3;
        spec.direction = static_cast<CompassDir>(rng.uniform_int(0, 7));
        spec.speed = rng.uniform(PromptRanges::kCameraSpeedLo, PromptRanges::kCameraSpeedHi);
        break;
    }
    spec.validate();
    out.push_back(spec);
  }
  return out;
}

std::vector<PromptSpec> augment(const PromptSpec& spec, std::size_t n_variants, std::uint64_t seed) {
  if (n_variants == 0) throw std::invalid_argument("augment: n_variants must be >= 1");
  spec.validate();
  std::vector<PromptSpec> out;
  out.reserve(n_variants);
  for (std::size_t i = 0; i < n_variants; ++i) {
    Rng rng(derive_seed(seed, "prompt/variant", i));
    PromptSpec v = spec;
    v.radius_base = rng.uniform(PromptRanges::kRadiusLo, PromptRanges::kRadiusHi);
    if (spec.dimension == Dimension::kInstancePreservation) {
      v.intensity_base = rng.uniform(PromptRanges::kInstanceIntensityLo, PromptRanges::kInstanceIntensityHi);
    } else {
      v.intensity_base = rng.uniform(PromptRanges::kIntensityLo, PromptRanges::kIntensityHi);
    }
    v.layout_seed = rng.next_u64();
    v.variant_id = static_cast<int>(i) + 1;
    out.push_back(v);
  }
  return out;
}

Tensor encode_conditioning(const PromptSpec& spec) {
  spec.validate();
  std::vector<double> cond(kCondDim, 0.0);
  cond[static_cast<std::size_t>(spec.dimension)] = 1.0;
  double* p = cond.data() + 5;
  switch (spec.dimension) {
    case Dimension::kMotionRationality:
      p[0] = scale_to_unit(spec.speed, PromptRanges::kMotionSpeedLo, PromptRanges::kMotionSpeedHi);
      p[1] = (spec.object_count - 1) / 2.0;
      break;
    case Dimension::kInstancePreservation:
      p[0] = (spec.object_count - 1) / 2.0;
      p[1] = scale_to_unit(spec.speed, PromptRanges::kInstanceSpeedLo, PromptRanges::kInstanceSpeedHi);
      break;
    case Dimension::kMechanicsGravity:
      p[0] = scale_to_unit(spec.gravity, PromptRanges::kGravityLo, PromptRanges::kGravityHi);
      p[1] = scale_to_unit(spec.drop_height, PromptRanges::kDropHeightLo, PromptRanges::kDropHeightHi);
      break;
    case Dimension::kDynamicSpatial:
      p[static_cast<std::size_t>(spec.relation)] = 1.0;
      p[4] = spec.pair_a / 2.0;
      p[5] = spec.pair_b / 2.0;
      p[6] = scale_to_unit(spec.speed, PromptRanges::kSpatialSpeedLo, PromptRanges::kSpatialSpeedHi);
      break;
    case Dimension::kCameraMotion: {
      auto dir = compass_vector(spec.direction);
      p[0] = dir[0];
      p[1] = dir[1];
      p[2] = scale_to_unit(spec.speed, PromptRanges::kCameraSpeedLo, PromptRanges::kCameraSpeedHi);
      break;
    }
  }
  return Tensor::vector(std::move(cond));
}

std::string prompt_text(const PromptSpec& spec) {
  char buf[256];
  std::string count_text;
  count_word(spec.object_count, count_text);
  switch (spec.dimension) {
    case Dimension::kMotionRationality:
      std::snprintf(buf, sizeof(buf), "%s bright orb%s glide smoothly across the scene at a steady pace of %.3f.",
                    count_text.c_str(), spec.object_count == 1 ? "" : "s", spec.speed);
      break;
    case Dimension::kInstancePreservation:
      std::snprintf(buf, sizeof(buf), "%s softly pulsing orb%s drift slowly; every one stays visible to the end.",
                    count_text.c_str(), spec.object_count == 1 ? "" : "s");
      break;
    case Dimension::kMechanicsGravity:
      std::snprintf(buf, sizeof(buf), "a ball dropped from height %.2f falls under gravity %.3f and bounces off the floor.",
                    spec.drop_height, spec.gravity);
      break;
    case Dimension::kDynamicSpatial: {
      std::string rel(relation_name(spec.relation));
      for (char& ch : rel) {
        if (ch == '_') ch = ' ';
      }
      std::snprintf(buf, sizeof(buf), "orb %d stays %s orb %d while the pair wanders together.", spec.pair_a,
                    rel.c_str(), spec.pair_b);
      break;
    }
    case Dimension::kCameraMotion:
      std::snprintf(buf, sizeof(buf), "camera pans %s at speed %.3f over a field of three orbs.",
                    std::string(compass_name(spec.direction)).c_str(), spec.speed);
      break;
  }
  std::string text = buf;
  if (spec.variant_id > 0) {
    text += " (style variant " + std::to_string(spec.variant_id) + ")";
  }
  return text;
}

namespace {

struct Candidate {
  bool ok = false;
  PromptSpec spec;
};

Candidate try_gravity(const VideoTrajectory& traj) {
  Candidate c;
  double x0 = traj.frames[0][0].x;
  for (const auto& frame : traj.frames) {
    if (std::abs(frame[0].x - x0) > 1e-9) return c;
  }
  GravityEstimate est = estimate_gravity(traj, 0);
  if (!est.valid || est.g_hat < kCaptionGravityLo || est.g_hat > kCaptionGravityHi) return c;
  if (est.residual_std > 0.25 * est.g_hat) return c;
  c.ok = true;
  c.spec.dimension = Dimension::kMechanicsGravity;
  c.spec.object_count = 1;
  c.spec.gravity = clampd(est.g_hat, PromptRanges::kGravityLo, PromptRanges::kGravityHi);
  c.spec.drop_height = clampd(traj.frames[0][0].y, PromptRanges::kDropHeightLo, PromptRanges::kDropHeightHi);
  return c;
}

Candidate try_camera(const VideoTrajectory& traj, const std::vector<std::size_t>& present) {
  Candidate c;
  if (present.size() < 2) return c;
  std::size_t T = traj.frames.size();
  // Global per-frame step, then coherence across objects and steadiness over
  // time, both at numerical tolerance: only a rigid steady translation fits.
  double sx = 0.0, sy = 0.0;
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t k : present) {
      sx += traj.frames[t + 1][k].x - traj.frames[t][k].x;
      sy += traj.frames[t + 1][k].y - traj.frames[t][k].y;
    }
  }
  double steps = static_cast<double>((T - 1) * present.size());
  sx /= steps;
  sy /= steps;
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t k : present) {
      double dx = traj.frames[t + 1][k].x - traj.frames[t][k].x;
      double dy = traj.frames[t + 1][k].y - traj.frames[t][k].y;
      if (std::abs(dx - sx) > kCaptionCoherence || std::abs(dy - sy) > kCaptionCoherence) return c;
    }
  }
  double speed = std::sqrt(sx * sx + sy * sy);
  if (speed < kCaptionCameraSpeed) return c;
  c.ok = true;
  c.spec.dimension = Dimension::kCameraMotion;
  c.spec.object_count = 3;
  c.spec.direction = nearest_compass(sx, sy);
  c.spec.speed = clampd(speed, PromptRanges::kCameraSpeedLo, PromptRanges::kCameraSpeedHi);
  return c;
}

Candidate try_spatial(const VideoTrajectory& traj, const std::vector<std::size_t>& present) {
  Candidate c;
  if (present.size() < 2) return c;
  std::size_t T = traj.frames.size();
  for (std::size_t ii = 0; ii < present.size(); ++ii) {
    for (std::size_t jj = ii + 1; jj < present.size(); ++jj) {
      std::size_t i = present[ii], j = present[jj];
      double sep_x0 = traj.frames[0][i].x - traj.frames[0][j].x;
      double sep_y0 = traj.frames[0][i].y - traj.frames[0][j].y;
      bool frozen = true;
      for (std::size_t t = 1; t < T && frozen; ++t) {
        double sep_x = traj.frames[t][i].x - traj.frames[t][j].x;
        double sep_y = traj.frames[t][i].y - traj.frames[t][j].y;
        if (std::abs(sep_x - sep_x0) > kCaptionCoherence || std::abs(sep_y - sep_y0) > kCaptionCoherence) frozen = false;
      }
      if (!frozen) continue;
      double pair_speed = mean_step_length(traj, {i, j});
      if (pair_speed < kCaptionPairSpeed) continue;
      double ax = std::abs(sep_x0), ay = std::abs(sep_y0);
      if (std::max(ax, ay) < kCaptionOrderMargin) continue;
      c.ok = true;
      c.spec.dimension = Dimension::kDynamicSpatial;
      c.spec.object_count = static_cast<int>(present.size());
      c.spec.pair_a = static_cast<int>(i);
      c.spec.pair_b = static_cast<int>(j);
      if (ax >= ay) {
        c.spec.relation = sep_x0 < 0.0 ? SpatialRelation::kLeftOf : SpatialRelation::kRightOf;
      } else {
        c.spec.relation = sep_y0 > 0.0 ? SpatialRelation::kAbove : SpatialRelation::kBelow;
      }
      c.spec.speed = clampd(pair_speed, PromptRanges::kSpatialSpeedLo, PromptRanges::kSpatialSpeedHi);
      return c;
    }
  }
  return c;
}

Candidate try_instance(const VideoTrajectory& traj, const std::vector<std::size_t>& present) {
  Candidate c;
  if (present.empty()) return c;
  PresenceStats stats = presence_stats(traj, kCaptionPresence);
  if (stats.modal_count < 1 || stats.modal_fraction < 1.0) return c;
  // Pulsing intensity is the instance signature; every other oracle holds
  // intensity constant.
  double pulse = 0.0;
  for (std::size_t k : present) {
    double mean = 0.0;
    for (const auto& frame : traj.frames) mean += frame[k].a;
    mean /= static_cast<double>(traj.frames.size());
    double var = 0.0;
    for (const auto& frame : traj.frames) var += (frame[k].a - mean) * (frame[k].a - mean);
    var /= static_cast<double>(traj.frames.size());
    pulse += std::sqrt(var);
  }
  pulse /= static_cast<double>(present.size());
  if (pulse < kCaptionPulseStd) return c;
  c.ok = true;
  c.spec.dimension = Dimension::kInstancePreservation;
  c.spec.object_count = std::min(3, std::max(1, stats.modal_count));
  c.spec.speed = clampd(mean_step_length(traj, present), PromptRanges::kInstanceSpeedLo, PromptRanges::kInstanceSpeedHi);
  return c;
}

void fill_style_from_trajectory(PromptSpec& spec, const VideoTrajectory& traj, const std::vector<std::size_t>& present) {
  double radius = 0.0, intensity = 0.0;
  std::size_t n = 0;
  const auto& slots = present.empty() ? std::vector<std::size_t>{0} : present;
  for (std::size_t k : slots) {
    for (const auto& frame : traj.frames) {
      radius += frame[k].r;
      intensity += frame[k].a;
      ++n;
    }
  }
  radius /= static_cast<double>(n);
  intensity /= static_cast<double>(n);
  spec.radius_base = clampd(radius, PromptRanges::kRadiusLo, PromptRanges::kRadiusHi);
  if (spec.dimension == Dimension::kInstancePreservation) {
    spec.intensity_base = clampd(intensity, PromptRanges::kInstanceIntensityLo, PromptRanges::kInstanceIntensityHi);
  } else {
    spec.intensity_base = clampd(intensity, PromptRanges::kIntensityLo, PromptRanges::kIntensityHi);
  }
  spec.layout_seed = 0;
  spec.variant_id = 0;
}

}  // namespace

PromptSpec caption_from_trajectory(const VideoTrajectory& traj) {
  traj.validate();
  auto present = present_slots(traj, kCaptionPresence);

  Candidate c = try_gravity(traj);
  if (!c.ok) c = try_camera(traj, present);
  if (!c.ok) c = try_spatial(traj, present);
  if (!c.ok) c = try_instance(traj, present);
  if (!c.ok) {
    // Fallback: describe it as plain motion at the observed mean speed.
    c.ok = true;
    c.spec.dimension = Dimension::kMotionRationality;
    PresenceStats stats = presence_stats(traj, kCaptionPresence);
    c.spec.object_count = std::min(3, std::max(1, stats.modal_count));
    c.spec.speed = clampd(mean_step_length(traj, present), PromptRanges::kMotionSpeedLo, PromptRanges::kMotionSpeedHi);
  }
  fill_style_from_trajectory(c.spec, traj, present);
  c.spec.validate();
  return c.spec;
}

}  // namespace flowforge
