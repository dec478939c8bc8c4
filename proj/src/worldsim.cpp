// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include "flowforge/worldsim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "flowforge/rng.hpp"

namespace flowforge {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;
constexpr double kBoxMargin = 0.06;
constexpr double kPresenceThreshold = 0.2;  // default a_min, used by estimators

double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Canonical home position of each object slot. Layouts jitter around these
/// anchors instead of spraying uniformly over the square, which keeps the
/// scene distribution concentrated enough for a small model to learn.
Vec2 slot_home(std::size_t slot) {
  switch (slot % 3) {
    case 0: return {0.30, 0.65};
    case 1: return {0.70, 0.65};
    default: return {0.50, 0.30};
  }
}

constexpr double kHomeJitter = 0.08;

/// Start position near the slot's home, constrained so that
/// start + (T-1)*velocity stays inside [margin, 1-margin] on both axes: the
/// constant-velocity sims never reflect.
Vec2 place_for_travel(Rng& rng, std::size_t slot, double vx, double vy, std::size_t frames) {
  double steps = static_cast<double>(frames - 1);
  double dx = vx * steps;
  double dy = vy * steps;
  double x_lo = kBoxMargin + std::max(0.0, -dx);
  double x_hi = 1.0 - kBoxMargin - std::max(0.0, dx);
  double y_lo = kBoxMargin + std::max(0.0, -dy);
  double y_hi = 1.0 - kBoxMargin - std::max(0.0, dy);
  if (x_hi < x_lo || y_hi < y_lo) {
    throw std::invalid_argument("simulate: travel exceeds the unit square");
  }
  Vec2 home = slot_home(slot);
  double ax = std::min(std::max(home.x, x_lo), x_hi);
  double ay = std::min(std::max(home.y, y_lo), y_hi);
  double jx = rng.uniform(-kHomeJitter, kHomeJitter);
  double jy = rng.uniform(-kHomeJitter, kHomeJitter);
  return {std::min(std::max(ax + jx, x_lo), x_hi), std::min(std::max(ay + jy, y_lo), y_hi)};
}

/// Pairwise-separated headings so multi-object scenes are never mistaken for
/// a coherent camera pan.
std::vector<double> separated_angles(Rng& rng, int count) {
  std::vector<double> angles(static_cast<std::size_t>(count));
  double base = rng.uniform(0.0, kTwoPi);
  for (int k = 0; k < count; ++k) {
    double jitter = rng.uniform(-0.2, 0.2) * kTwoPi / std::max(1, 3 * count);
    angles[static_cast<std::size_t>(k)] = base + kTwoPi * static_cast<double>(k) / static_cast<double>(count) + jitter;
  }
  return angles;
}

void step_reflect(double& p, double& v) {
  p += v;
  if (p < 0.05) {
    p = 0.1 - p;
    v = -v;
  } else if (p > 0.95) {
    p = 1.9 - p;
    v = -v;
  }
}

std::vector<std::vector<ObjectState>> empty_frames(const WorldConfig& world) {
  return std::vector<std::vector<ObjectState>>(world.frames, std::vector<ObjectState>(world.objects));
}

void fill_absent(Rng& rng, std::vector<std::vector<ObjectState>>& frames, std::size_t slot, double radius) {
  Vec2 home = slot_home(slot);
  double x = home.x + rng.uniform(-kHomeJitter, kHomeJitter);
  double y = home.y + rng.uniform(-kHomeJitter, kHomeJitter);
  for (auto& frame : frames) {
    frame[slot] = ObjectState{x, y, radius, 0.0};
  }
}

}  // namespace

void VideoTrajectory::validate() const {
  if (frames.size() != world.frames) {
    throw std::invalid_argument("trajectory: frame count does not match world config");
  }
  for (const auto& frame : frames) {
    if (frame.size() != world.objects) {
      throw std::invalid_argument("trajectory: object slot count does not match world config");
    }
    for (const ObjectState& s : frame) {
      if (!(s.x >= 0.0 && s.x <= 1.0 && s.y >= 0.0 && s.y <= 1.0)) {
        throw std::invalid_argument("trajectory: position outside the unit square");
      }
      if (!(s.r > 0.0 && s.r <= 0.25)) throw std::invalid_argument("trajectory: radius outside (0, 0.25]");
      if (!(s.a >= 0.0 && s.a <= 1.0)) throw std::invalid_argument("trajectory: intensity outside [0, 1]");
    }
  }
}

std::string_view defect_name(DefectKind k) {
  switch (k) {
    case DefectKind::kTeleport: return "teleport";
    case DefectKind::kVanish: return "vanish";
    case DefectKind::kWrongGravity: return "wrong_gravity";
    case DefectKind::kShuffleOrder: return "shuffle_order";
    case DefectKind::kDriftCamera: return "drift_camera";
  }
  return "teleport";
}

DefectKind defect_from_name(std::string_view name) {
  for (DefectKind k : kAllDefects) {
    if (defect_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown defect kind: " + std::string(name));
}

void DefectConfig::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("defect config: rate outside [0,1]");
  if (!(magnitude >= 0.0)) throw std::invalid_argument("defect config: negative magnitude");
}

VideoTrajectory simulate(const PromptSpec& spec, std::uint64_t seed, const WorldConfig& world) {
  spec.validate();
  if (world.frames < 6 || world.objects == 0) {
    throw std::invalid_argument("simulate: world too small");
  }
  if (static_cast<std::size_t>(spec.object_count) > world.objects) {
    throw std::invalid_argument("simulate: spec object_count exceeds world slots");
  }
  Rng rng(derive_seed(seed, "sim/layout", spec.layout_seed));
  VideoTrajectory traj;
  traj.world = world;
  traj.frames = empty_frames(world);
  std::size_t T = world.frames;
  std::size_t K = world.objects;
  int count = spec.object_count;

  switch (spec.dimension) {
    case Dimension::kMotionRationality: {
      auto angles = separated_angles(rng, count);
      for (int k = 0; k < count; ++k) {
        double vx = spec.speed * std::cos(angles[static_cast<std::size_t>(k)]);
        double vy = spec.speed * std::sin(angles[static_cast<std::size_t>(k)]);
        Vec2 p = place_for_travel(rng, static_cast<std::size_t>(k), vx, vy, T);
        double x = p.x, y = p.y, cvx = vx, cvy = vy;
        for (std::size_t t = 0; t < T; ++t) {
          traj.frames[t][static_cast<std::size_t>(k)] = ObjectState{x, y, spec.radius_base, spec.intensity_base};
          step_reflect(x, cvx);
          step_reflect(y, cvy);
        }
      }
      for (std::size_t k = static_cast<std::size_t>(count); k < K; ++k) fill_absent(rng, traj.frames, k, spec.radius_base);
      break;
    }
    case Dimension::kInstancePreservation: {
      auto angles = separated_angles(rng, count);
      for (int k = 0; k < count; ++k) {
        double vx = spec.speed * std::cos(angles[static_cast<std::size_t>(k)]);
        double vy = spec.speed * std::sin(angles[static_cast<std::size_t>(k)]);
        Vec2 p = place_for_travel(rng, static_cast<std::size_t>(k), vx, vy, T);
        double phase = rng.uniform(0.0, kTwoPi);
        for (std::size_t t = 0; t < T; ++t) {
          double a = spec.intensity_base +
                     PromptRanges::kInstancePulse * std::sin(kTwoPi * static_cast<double>(t) / static_cast<double>(T) + phase);
          traj.frames[t][static_cast<std::size_t>(k)] =
              ObjectState{p.x + vx * static_cast<double>(t), p.y + vy * static_cast<double>(t), spec.radius_base,
                          clamp(a, 0.0, 1.0)};
        }
      }
      for (std::size_t k = static_cast<std::size_t>(count); k < K; ++k) fill_absent(rng, traj.frames, k, spec.radius_base);
      break;
    }
    case Dimension::kMechanicsGravity: {
      // Semi-implicit fall: second differences of y equal -g exactly until
      // the elastic bounce at the floor.
      double x = rng.uniform(0.45, 0.55);
      double y = spec.drop_height;
      double v = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        traj.frames[t][0] = ObjectState{x, clamp(y, 0.0, 1.0), spec.radius_base, spec.intensity_base};
        v -= spec.gravity;
        y += v;
        if (y < 0.0) {
          y = -y;
          v = -v;
        }
      }
      for (std::size_t k = 1; k < K; ++k) fill_absent(rng, traj.frames, k, spec.radius_base);
      break;
    }
    case Dimension::kDynamicSpatial: {
      if (spec.pair_a >= spec.object_count || spec.pair_b >= spec.object_count) {
        throw std::invalid_argument("simulate: spatial pair must reference prompted objects");
      }
      std::size_t a = static_cast<std::size_t>(spec.pair_a);
      std::size_t b = static_cast<std::size_t>(spec.pair_b);
      double sep = rng.uniform(0.25, 0.45);
      double cross = rng.uniform(-0.08, 0.08);
      // Offset of object a relative to object b, honoring the relation.
      Vec2 offset;
      switch (spec.relation) {
        case SpatialRelation::kLeftOf: offset = {-sep, cross}; break;
        case SpatialRelation::kRightOf: offset = {sep, cross}; break;
        case SpatialRelation::kAbove: offset = {cross, sep}; break;
        case SpatialRelation::kBelow: offset = {cross, -sep}; break;
      }
      double angle = rng.uniform(0.0, kTwoPi);
      double vx = spec.speed * std::cos(angle);
      double vy = spec.speed * std::sin(angle);
      // Anchor the pair midpoint near the scene center, inside the region
      // where both endpoints and their whole travel stay in the box.
      double steps = static_cast<double>(T - 1);
      double half_x = std::abs(offset.x) / 2.0, half_y = std::abs(offset.y) / 2.0;
      double mx_lo = kBoxMargin + half_x + std::max(0.0, -vx * steps);
      double mx_hi = 1.0 - kBoxMargin - half_x - std::max(0.0, vx * steps);
      double my_lo = kBoxMargin + half_y + std::max(0.0, -vy * steps);
      double my_hi = 1.0 - kBoxMargin - half_y - std::max(0.0, vy * steps);
      if (mx_hi < mx_lo || my_hi < my_lo) throw std::runtime_error("simulate: could not place spatial pair");
      auto clampd2 = [](double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); };
      double mx = clampd2(0.5 + rng.uniform(-kHomeJitter, kHomeJitter), mx_lo, mx_hi);
      double my = clampd2(0.5 + rng.uniform(-kHomeJitter, kHomeJitter), my_lo, my_hi);
      Vec2 pb{mx - offset.x / 2.0, my - offset.y / 2.0};
      for (std::size_t t = 0; t < T; ++t) {
        double dt = static_cast<double>(t);
        traj.frames[t][b] = ObjectState{pb.x + vx * dt, pb.y + vy * dt, spec.radius_base, spec.intensity_base};
        traj.frames[t][a] =
            ObjectState{pb.x + offset.x + vx * dt, pb.y + offset.y + vy * dt, spec.radius_base, spec.intensity_base};
      }
      for (int k = 0; k < count; ++k) {
        auto slot = static_cast<std::size_t>(k);
        if (slot == a || slot == b) continue;
        double wander = rng.uniform(0.002, 0.006);
        double wangle = rng.uniform(0.0, kTwoPi);
        double wvx = wander * std::cos(wangle), wvy = wander * std::sin(wangle);
        Vec2 p = place_for_travel(rng, slot, wvx, wvy, T);
        for (std::size_t t = 0; t < T; ++t) {
          traj.frames[t][slot] = ObjectState{p.x + wvx * static_cast<double>(t), p.y + wvy * static_cast<double>(t),
                                             spec.radius_base, spec.intensity_base};
        }
      }
      for (std::size_t k = static_cast<std::size_t>(count); k < K; ++k) fill_absent(rng, traj.frames, k, spec.radius_base);
      break;
    }
    case Dimension::kCameraMotion: {
      auto dir = compass_vector(spec.direction);
      double vx = spec.speed * dir[0];
      double vy = spec.speed * dir[1];
      for (std::size_t k = 0; k < K; ++k) {
        Vec2 p = place_for_travel(rng, k, vx, vy, T);
        for (std::size_t t = 0; t < T; ++t) {
          traj.frames[t][k] = ObjectState{p.x + vx * static_cast<double>(t), p.y + vy * static_cast<double>(t),
                                          spec.radius_base, spec.intensity_base};
        }
      }
      break;
    }
  }
  traj.validate();
  return traj;
}

namespace {

std::vector<std::size_t> present_slots_impl(const VideoTrajectory& traj, double a_min) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < traj.world.objects; ++k) {
    double mean = 0.0;
    for (const auto& frame : traj.frames) mean += frame[k].a;
    mean /= static_cast<double>(traj.frames.size());
    if (mean >= a_min) out.push_back(k);
  }
  return out;
}

double slot_mean_step(const VideoTrajectory& traj, std::size_t k) {
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < traj.frames.size(); ++t) {
    double dx = traj.frames[t + 1][k].x - traj.frames[t][k].x;
    double dy = traj.frames[t + 1][k].y - traj.frames[t][k].y;
    total += std::sqrt(dx * dx + dy * dy);
  }
  return total / static_cast<double>(traj.frames.size() - 1);
}

void apply_teleport(VideoTrajectory& traj, double magnitude) {
  auto present = present_slots_impl(traj, kPresenceThreshold);
  std::size_t target = 0;
  double best = -1.0;
  for (std::size_t k : present) {
    double s = slot_mean_step(traj, k);
    if (s > best) {
      best = s;
      target = k;
    }
  }
  double speed_norm = clamp(best / 0.04, 0.0, 1.0);
  std::size_t T = traj.frames.size();
  std::size_t f = 4 + static_cast<std::size_t>(std::floor(speed_norm * 8.0));
  if (f >= T - 1) f = T - 2;
  double angle = kTwoPi * speed_norm + kTwoPi * static_cast<double>(target) / 3.0;
  double dx = magnitude * std::cos(angle);
  double dy = magnitude * std::sin(angle);
  for (std::size_t t = f; t < T; ++t) {
    traj.frames[t][target].x = clamp(traj.frames[t][target].x + dx, 0.02, 0.98);
    traj.frames[t][target].y = clamp(traj.frames[t][target].y + dy, 0.02, 0.98);
  }
}

void apply_vanish(VideoTrajectory& traj) {
  auto present = present_slots_impl(traj, kPresenceThreshold);
  std::size_t target = present.empty() ? 0 : present.back();
  for (std::size_t t = traj.frames.size() / 2; t < traj.frames.size(); ++t) {
    traj.frames[t][target].a = 0.0;
  }
}

void apply_wrong_gravity(VideoTrajectory& traj, double magnitude) {
  double scale = clamp(magnitude, 0.0, 1.0);
  std::size_t T = traj.frames.size();
  for (std::size_t k = 0; k < traj.world.objects; ++k) {
    std::vector<double> y(T);
    for (std::size_t t = 0; t < T; ++t) y[t] = traj.frames[t][k].y;
    std::vector<double> rebuilt(T);
    rebuilt[0] = y[0];
    if (T > 1) rebuilt[1] = y[1];
    for (std::size_t t = 2; t < T; ++t) {
      double curvature = y[t] - 2.0 * y[t - 1] + y[t - 2];
      rebuilt[t] = 2.0 * rebuilt[t - 1] - rebuilt[t - 2] + scale * curvature;
    }
    for (std::size_t t = 0; t < T; ++t) traj.frames[t][k].y = clamp(rebuilt[t], 0.0, 1.0);
  }
}

void apply_shuffle_order(VideoTrajectory& traj) {
  auto present = present_slots_impl(traj, kPresenceThreshold);
  if (present.size() < 2) return;
  std::size_t best_i = present[0], best_j = present[1];
  double best = -1.0;
  for (std::size_t i = 0; i < present.size(); ++i) {
    for (std::size_t j = i + 1; j < present.size(); ++j) {
      double gap = 0.0;
      for (const auto& frame : traj.frames) gap += std::abs(frame[present[i]].x - frame[present[j]].x);
      if (gap > best) {
        best = gap;
        best_i = present[i];
        best_j = present[j];
      }
    }
  }
  for (auto& frame : traj.frames) std::swap(frame[best_i].x, frame[best_j].x);
}

void apply_drift_camera(VideoTrajectory& traj, double magnitude) {
  // Rotating global drift: every frame the whole scene shifts by a fixed
  // step whose heading sweeps three quarters of a turn over the clip. The
  // pattern is identical for every defected clip, so a corpus at any defect
  // rate carries it as a plain learnable bias instead of averaging it away.
  std::size_t T = traj.frames.size();
  double step = std::min(0.5 * magnitude, 0.2);
  double sweep = 1.5 * kPi / static_cast<double>(T - 1);
  double ox = 0.0, oy = 0.0;
  for (std::size_t t = 1; t < T; ++t) {
    double theta = sweep * static_cast<double>(t - 1);
    ox += step * std::cos(theta);
    oy += step * std::sin(theta);
    for (auto& s : traj.frames[t]) {
      s.x = clamp(s.x + ox, 0.01, 0.99);
      s.y = clamp(s.y + oy, 0.01, 0.99);
    }
  }
}

}  // namespace

namespace {

/// Coarse scene signature for the defect gate: clips with similar speed,
/// population, and height defect together (or not at all). Bucketing keeps
/// the corruption at full strength inside the affected prompt regions, so a
/// sub-one rate cannot launder it into a weaker, smoother average.
std::uint64_t defect_bucket(const VideoTrajectory& traj) {
  auto present = present_slots_impl(traj, kPresenceThreshold);
  double speed = 0.0;
  for (std::size_t k : present) speed += slot_mean_step(traj, k);
  if (!present.empty()) speed /= static_cast<double>(present.size());
  double mean_y = 0.0;
  for (std::size_t k : present) mean_y += traj.frames[0][k].y;
  if (!present.empty()) mean_y /= static_cast<double>(present.size());
  std::uint64_t speed_bucket = static_cast<std::uint64_t>(clamp(speed / 0.045, 0.0, 0.999) * 16.0);
  std::uint64_t y_bucket = static_cast<std::uint64_t>(clamp(mean_y, 0.0, 0.999) * 4.0);
  return (speed_bucket << 8) | (y_bucket << 4) | present.size();
}

}  // namespace

VideoTrajectory inject_defects(const VideoTrajectory& traj, const DefectConfig& defects) {
  defects.validate();
  traj.validate();
  Rng gate(derive_seed(defects.seed, "defect/gate", defect_bucket(traj)));
  if (!(gate.uniform() < defects.rate)) {
    return traj;  // untouched trajectories come back bit-identical
  }
  VideoTrajectory out = traj;
  for (DefectKind kind : defects.kinds) {  // std::set iterates in enum order
    switch (kind) {
      case DefectKind::kTeleport: apply_teleport(out, defects.magnitude); break;
      case DefectKind::kVanish: apply_vanish(out); break;
      case DefectKind::kWrongGravity: apply_wrong_gravity(out, defects.magnitude); break;
      case DefectKind::kShuffleOrder: apply_shuffle_order(out); break;
      case DefectKind::kDriftCamera: apply_drift_camera(out, defects.magnitude); break;
    }
  }
  out.validate();
  return out;
}

Tensor encode(const VideoTrajectory& traj) {
  traj.validate();
  const WorldConfig& world = traj.world;
  std::vector<double> out(world.latent_dim());
  for (std::size_t t = 0; t < world.frames; ++t) {
    for (std::size_t k = 0; k < world.objects; ++k) {
      const ObjectState& s = traj.frames[t][k];
      out[latent_index(t, k, 0, world)] = 2.0 * s.x - 1.0;
      out[latent_index(t, k, 1, world)] = 2.0 * s.y - 1.0;
      out[latent_index(t, k, 2, world)] = (s.r - 0.125) / 0.125;
      out[latent_index(t, k, 3, world)] = 2.0 * s.a - 1.0;
    }
  }
  return Tensor::vector(std::move(out));
}

VideoTrajectory decode(const Tensor& latent, const WorldConfig& world) {
  if (latent.size() != world.latent_dim()) {
    throw std::invalid_argument("decode: latent length " + std::to_string(latent.size()) + " does not match " +
                                std::to_string(world.latent_dim()));
  }
  VideoTrajectory traj;
  traj.world = world;
  traj.frames = empty_frames(world);
  for (std::size_t t = 0; t < world.frames; ++t) {
    for (std::size_t k = 0; k < world.objects; ++k) {
      ObjectState s;
      s.x = clamp((latent[latent_index(t, k, 0, world)] + 1.0) / 2.0, 0.0, 1.0);
      s.y = clamp((latent[latent_index(t, k, 1, world)] + 1.0) / 2.0, 0.0, 1.0);
      s.r = clamp(0.125 * latent[latent_index(t, k, 2, world)] + 0.125, kMinRadius, 0.25);
      s.a = clamp((latent[latent_index(t, k, 3, world)] + 1.0) / 2.0, 0.0, 1.0);
      traj.frames[t][k] = s;
    }
  }
  return traj;
}

std::vector<std::uint8_t> render_frame(const VideoTrajectory& traj, std::size_t frame_index, std::size_t resolution) {
  traj.validate();
  if (frame_index >= traj.frames.size()) {
    throw std::invalid_argument("render_frame: frame index " + std::to_string(frame_index) + " out of range");
  }
  if (resolution < 8) throw std::invalid_argument("render_frame: resolution must be >= 8");
  const auto& frame = traj.frames[frame_index];
  std::vector<std::uint8_t> pixels(resolution * resolution);
  for (std::size_t row = 0; row < resolution; ++row) {
    double py = 1.0 - (static_cast<double>(row) + 0.5) / static_cast<double>(resolution);
    for (std::size_t col = 0; col < resolution; ++col) {
      double px = (static_cast<double>(col) + 0.5) / static_cast<double>(resolution);
      double v = 0.0;
      for (const ObjectState& s : frame) {
        if (s.a == 0.0) continue;
        double sigma = s.r / 2.0;
        double dx = px - s.x;
        double dy = py - s.y;
        v += s.a * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      }
      v = clamp(v, 0.0, 1.0);
      pixels[row * resolution + col] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return pixels;
}

void write_pgm(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, std::size_t width,
               std::size_t height) {
  if (pixels.size() != width * height) throw std::invalid_argument("write_pgm: pixel count mismatch");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path.string());
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw std::runtime_error("write_pgm: write failed for " + path.string());
}

std::array<double, 2> mean_drift(const VideoTrajectory& traj) {
  std::size_t T = traj.frames.size();
  std::size_t K = traj.world.objects;
  double dx = 0.0, dy = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    dx += traj.frames[T - 1][k].x - traj.frames[0][k].x;
    dy += traj.frames[T - 1][k].y - traj.frames[0][k].y;
  }
  double scale = static_cast<double>(K) * static_cast<double>(T - 1);
  return {dx / scale, dy / scale};
}

GravityEstimate estimate_gravity(const VideoTrajectory& traj, std::size_t object) {
  GravityEstimate est;
  std::size_t T = traj.frames.size();
  if (object >= traj.world.objects || T < 4) return est;
  std::vector<double> y(T);
  for (std::size_t t = 0; t < T; ++t) y[t] = traj.frames[t][object].y;

  std::size_t t_rise = T;
  for (std::size_t t = 1; t < T; ++t) {
    if (y[t] > y[t - 1] + 1e-12) {
      t_rise = t;
      break;
    }
  }
  // Frames 0 .. t_rise-2 are certainly pre-bounce; the frame right before a
  // detected rise may already sit on the rebound, so it is excluded.
  est.pre_bounce_frames = t_rise >= 1 ? t_rise - 1 : 0;
  if (t_rise == T) est.pre_bounce_frames = T - 1;
  est.valid = est.pre_bounce_frames >= 3;
  if (!est.valid) return est;

  std::size_t last_diff = est.pre_bounce_frames >= 2 ? est.pre_bounce_frames - 2 : 0;
  std::vector<double> diffs;
  for (std::size_t t = 1; t <= last_diff; ++t) {
    diffs.push_back(-(y[t + 1] - 2.0 * y[t] + y[t - 1]));
  }
  if (diffs.empty()) {
    est.valid = false;
    return est;
  }
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= static_cast<double>(diffs.size());
  double var = 0.0;
  for (double d : diffs) var += (d - mean) * (d - mean);
  var /= static_cast<double>(diffs.size());
  est.g_hat = mean;
  est.residual_std = std::sqrt(var);
  est.used_diffs = diffs.size();
  return est;
}

PresenceStats presence_stats(const VideoTrajectory& traj, double a_min) {
  PresenceStats stats;
  for (const auto& frame : traj.frames) {
    int c = 0;
    for (const ObjectState& s : frame) {
      if (s.a >= a_min) ++c;
    }
    stats.per_frame.push_back(c);
  }
  std::vector<int> histogram(traj.world.objects + 1, 0);
  for (int c : stats.per_frame) ++histogram[static_cast<std::size_t>(c)];
  int best = 0;
  for (std::size_t c = 0; c < histogram.size(); ++c) {
    if (histogram[c] > best) {
      best = histogram[c];
      stats.modal_count = static_cast<int>(c);
    }
  }
  stats.modal_fraction = static_cast<double>(best) / static_cast<double>(stats.per_frame.size());
  return stats;
}

std::vector<std::size_t> present_slots(const VideoTrajectory& traj, double a_min) {
  return present_slots_impl(traj, a_min);
}

double mean_step_length(const VideoTrajectory& traj, const std::vector<std::size_t>& slots) {
  if (slots.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t k : slots) total += slot_mean_step(traj, k);
  return total / static_cast<double>(slots.size());
}

}  // namespace flowforge
