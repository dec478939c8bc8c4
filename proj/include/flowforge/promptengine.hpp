// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowforge/prompt_spec.hpp"
#include "flowforge/tensor.hpp"
#include "flowforge/worldsim.hpp"

namespace flowforge {

inline constexpr std::size_t kCondDim = 13;

/// A prompt ready for conditioning: the structured spec, its deterministic
/// text rendering, and the encoded conditioning vector.
struct Prompt {
  PromptSpec spec;
  std::string text;
  Tensor cond;
};

Prompt make_prompt(const PromptSpec& spec);

/// Weakness-oriented base prompts: n specs with parameters drawn uniformly
/// from the documented per-dimension ranges. Deterministic per seed.
std::vector<PromptSpec> gen_base_prompts(Dimension dimension, std::size_t n, std::uint64_t seed);

/// Stylistic variants: copies with only the style slots perturbed (radius,
/// intensity, layout seed) and variant_id set 1..n. Dimension-critical
/// parameters are preserved exactly.
std::vector<PromptSpec> augment(const PromptSpec& spec, std::size_t n_variants, std::uint64_t seed);

/// Conditioning layout (length 13):
///   [0..4]  one-hot dimension (motion, instance, gravity, spatial, camera)
///   [5..12] parameter slots, zero-padded:
///     motion:   5 = speed scaled to [0,1], 6 = (count-1)/2
///     instance: 5 = (count-1)/2, 6 = speed scaled
///     gravity:  5 = g scaled, 6 = drop_height scaled
///     spatial:  5..8 one-hot relation, 9 = pair_a/2, 10 = pair_b/2, 11 = speed scaled
///     camera:   5 = dir_x, 6 = dir_y (unit vector), 7 = speed scaled
Tensor encode_conditioning(const PromptSpec& spec);

/// Deterministic template text for a spec (regenerable; not stored in
/// dataset files).
std::string prompt_text(const PromptSpec& spec);

/// Inverse inference of the dominant dimension and its parameters from a
/// trajectory (the "caption" of an oracle clip). The decision cascade is
/// fixed:
///   1. gravity:  slot-0 x frozen, consistent negative vertical curvature
///   2. camera:   >= 2 present slots moving as one rigid steady translation
///   3. spatial:  a present pair with frozen separation, a clear ordering
///                margin on the dominant axis, and nonzero shared speed
///   4. instance: stable presence count with pulsing intensities
///   5. motion:   fallback; speed is the mean present-slot displacement
PromptSpec caption_from_trajectory(const VideoTrajectory& traj);

}  // namespace flowforge
