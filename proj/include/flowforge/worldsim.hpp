// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string_view>
#include <vector>

#include "flowforge/prompt_spec.hpp"
#include "flowforge/tensor.hpp"

namespace flowforge {

/// Frame/object extents of the toy video world. The flat latent has length
/// frames * objects * 4.
struct WorldConfig {
  std::size_t frames = 16;
  std::size_t objects = 3;

  std::size_t latent_dim() const { return frames * objects * 4; }
  bool operator==(const WorldConfig&) const = default;
};

/// One rendered entity: position in the unit square, radius, intensity.
/// Absent objects are encoded with intensity exactly 0.
struct ObjectState {
  double x = 0.5;
  double y = 0.5;
  double r = 0.125;
  double a = 0.0;
};

/// T frames of exactly K object slots; the toy analogue of a video clip.
struct VideoTrajectory {
  WorldConfig world;
  std::vector<std::vector<ObjectState>> frames;

  void validate() const;
};

enum class DefectKind { kTeleport, kVanish, kWrongGravity, kShuffleOrder, kDriftCamera };

std::string_view defect_name(DefectKind k);
DefectKind defect_from_name(std::string_view name);

inline const std::set<DefectKind> kAllDefects = {DefectKind::kTeleport, DefectKind::kVanish,
                                                 DefectKind::kWrongGravity, DefectKind::kShuffleOrder,
                                                 DefectKind::kDriftCamera};

/// Corpus corruption settings. The seed gates only whether a trajectory is
/// defected; each defect's placement then derives from trajectory statistics
/// (or, for the global drift, a shared fixed pattern), so corpora fail in
/// consistent, learnable ways instead of averaging out to clean behavior.
struct DefectConfig {
  double rate = 0.0;
  std::set<DefectKind> kinds = kAllDefects;
  double magnitude = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Physics oracle. Produces a trajectory that scores >= 0.99 on its own
/// dimension by construction; deterministic in (spec, seed).
///
/// Dynamics per dimension:
///   motion:   constant-velocity glide, reflective walls (starts are placed
///             so the path stays inside the box)
///   instance: slow independent drift, intensities pulse sinusoidally above
///             the presence threshold; absent slots stay at intensity 0
///   gravity:  single ball, x fixed, semi-implicit fall (second differences
///             of y equal -g exactly) with elastic floor bounce
///   spatial:  the prompted pair shares one slow velocity so its separation
///             is constant and the prompted ordering margin never erodes
///   camera:   all slots translate together along the prompted heading
VideoTrajectory simulate(const PromptSpec& spec, std::uint64_t seed, const WorldConfig& world = {});

VideoTrajectory inject_defects(const VideoTrajectory& traj, const DefectConfig& defects);

/// Affine latent codec. Fields map to roughly unit scale: x,y -> 2v-1,
/// r -> (v - 0.125)/0.125, a -> 2v-1. decode inverts and clamps, so it is
/// total; encode(decode(latent)) is the identity for in-range latents.
Tensor encode(const VideoTrajectory& traj);
VideoTrajectory decode(const Tensor& latent, const WorldConfig& world = {});

/// Smallest decodable radius (decode clamps below this). Power of two so the
/// round trip through the affine map stays bit-exact.
inline constexpr double kMinRadius = 0.00390625;  // 2^-8

/// Flat index of (frame, object, field) in the latent layout.
inline std::size_t latent_index(std::size_t frame, std::size_t object, std::size_t field, const WorldConfig& world) {
  return (frame * world.objects + object) * 4 + field;
}

/// Additive Gaussian splats (sigma = r/2) scaled by intensity, clamped to
/// [0,1], quantized to 8 bits. Row 0 is the top of the frame (y = 1).
std::vector<std::uint8_t> render_frame(const VideoTrajectory& traj, std::size_t frame_index, std::size_t resolution);

/// Binary PGM (P5) export of one rendered frame.
void write_pgm(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, std::size_t width,
               std::size_t height);

// --- estimation helpers shared by captioning and cross-dimension scoring ---

/// Mean displacement vector (pos_last - pos_first)/(T-1) averaged over all
/// slots; the camera scorer's d-bar.
std::array<double, 2> mean_drift(const VideoTrajectory& traj);

/// Gravity estimate for one object slot: trend of -(second differences of y)
/// over the pre-bounce window. The window conservatively stops two frames
/// before the first detected rise of y so a gentle undetected reflection can
/// never contaminate the estimate.
struct GravityEstimate {
  double g_hat = 0.0;
  double residual_std = 0.0;  // spread of the second differences
  std::size_t pre_bounce_frames = 0;
  std::size_t used_diffs = 0;
  bool valid = false;  // >= 3 pre-bounce frames
};

GravityEstimate estimate_gravity(const VideoTrajectory& traj, std::size_t object);

/// Per-frame presence counts (intensity >= a_min) and their mode.
struct PresenceStats {
  std::vector<int> per_frame;
  int modal_count = 0;
  double modal_fraction = 0.0;  // fraction of frames at the modal count
};

PresenceStats presence_stats(const VideoTrajectory& traj, double a_min);

/// Slots whose mean intensity is >= a_min.
std::vector<std::size_t> present_slots(const VideoTrajectory& traj, double a_min);

/// Mean per-transition displacement magnitude over the given slots.
double mean_step_length(const VideoTrajectory& traj, const std::vector<std::size_t>& slots);

}  // namespace flowforge
