// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "flowforge/promptengine.hpp"
#include "flowforge/rewardlab.hpp"
#include "flowforge/rng.hpp"
#include "flowforge/worldsim.hpp"

using namespace flowforge;

namespace {

bool bitwise_equal(const VideoTrajectory& a, const VideoTrajectory& b) {
  if (a.frames.size() != b.frames.size()) return false;
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    for (std::size_t k = 0; k < a.frames[t].size(); ++k) {
      const ObjectState &sa = a.frames[t][k], &sb = b.frames[t][k];
      if (sa.x != sb.x || sa.y != sb.y || sa.r != sb.r || sa.a != sb.a) return false;
    }
  }
  return true;
}

PromptSpec spec_of(Dimension dim, std::uint64_t seed) { return gen_base_prompts(dim, 1, seed)[0]; }

}  // namespace

TEST_CASE("gravity oracle: second differences of y equal -g before the bounce") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PromptSpec spec = spec_of(Dimension::kMechanicsGravity, seed);
    VideoTrajectory traj = simulate(spec, derive_seed(seed, "sim", 0));
    // Walk until just before the first rise (the bounce).
    std::size_t t_rise = traj.frames.size();
    for (std::size_t t = 1; t < traj.frames.size(); ++t) {
      if (traj.frames[t][0].y > traj.frames[t - 1][0].y + 1e-12) {
        t_rise = t;
        break;
      }
    }
    REQUIRE(t_rise >= 4);
    for (std::size_t t = 1; t + 2 <= t_rise - 1; ++t) {
      double dd = traj.frames[t + 1][0].y - 2.0 * traj.frames[t][0].y + traj.frames[t - 1][0].y;
      CHECK(dd == doctest::Approx(-spec.gravity).epsilon(1e-9));
    }
  }
}

TEST_CASE("camera oracle: every displacement follows the prompted heading exactly") {
  PromptSpec spec = spec_of(Dimension::kCameraMotion, 3);
  spec.direction = CompassDir::kE;
  VideoTrajectory traj = simulate(spec, 11);
  for (std::size_t t = 0; t + 1 < traj.frames.size(); ++t) {
    for (std::size_t k = 0; k < traj.world.objects; ++k) {
      double dx = traj.frames[t + 1][k].x - traj.frames[t][k].x;
      double dy = traj.frames[t + 1][k].y - traj.frames[t][k].y;
      CHECK(dx > 0.0);
      CHECK(std::abs(dy) < 1e-9);
      CHECK(dx == doctest::Approx(spec.speed).epsilon(1e-9));
    }
  }
}

TEST_CASE("simulate is deterministic per (spec, seed)") {
  for (Dimension dim : kAllDimensions) {
    PromptSpec spec = spec_of(dim, 7);
    VideoTrajectory a = simulate(spec, 21);
    VideoTrajectory b = simulate(spec, 21);
    CHECK(bitwise_equal(a, b));
  }
}

TEST_CASE("oracles score >= 0.99 on their own dimension, 100 seeds each") {
  ScorerConfig cfg;
  for (Dimension dim : kAllDimensions) {
    std::size_t passed = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      PromptSpec spec = spec_of(dim, derive_seed(seed, "oracle-prompt", static_cast<std::uint64_t>(dim)));
      VideoTrajectory traj = simulate(spec, derive_seed(seed, "oracle-sim", static_cast<std::uint64_t>(dim)));
      RewardScore s = score_hard(dim, traj, spec, cfg);
      if (s.valid && s.value >= 0.99) ++passed;
    }
    CHECK_MESSAGE(passed == 100, "dimension ", dimension_name(dim), " passed ", passed, "/100");
  }
}

TEST_CASE("defect rate 0 returns the trajectory bit-identical") {
  PromptSpec spec = spec_of(Dimension::kMotionRationality, 5);
  VideoTrajectory traj = simulate(spec, 9);
  DefectConfig defects;
  defects.rate = 0.0;
  defects.seed = 4;
  CHECK(bitwise_equal(inject_defects(traj, defects), traj));
}

TEST_CASE("vanish zeroes one object's intensity from mid-video") {
  PromptSpec spec = spec_of(Dimension::kInstancePreservation, 8);
  spec.object_count = 2;
  VideoTrajectory traj = simulate(spec, 13);
  DefectConfig defects;
  defects.rate = 1.0;
  defects.kinds = {DefectKind::kVanish};
  defects.seed = 2;
  VideoTrajectory out = inject_defects(traj, defects);
  std::size_t zeroed = 0;
  const auto& last = out.frames.back();
  for (std::size_t k = 0; k < out.world.objects; ++k) {
    if (traj.frames.back()[k].a > 0.0 && last[k].a == 0.0) ++zeroed;
  }
  CHECK(zeroed == 1);
}

TEST_CASE("teleport at rate 1 pushes the motion score below 1") {
  ScorerConfig cfg;
  PromptSpec spec = spec_of(Dimension::kMotionRationality, 17);
  VideoTrajectory traj = simulate(spec, 23);
  REQUIRE(score_hard(Dimension::kMotionRationality, traj, spec, cfg).value == doctest::Approx(1.0));
  DefectConfig defects;
  defects.rate = 1.0;
  defects.kinds = {DefectKind::kTeleport};
  defects.magnitude = 0.3;
  defects.seed = 31;
  VideoTrajectory out = inject_defects(traj, defects);
  RewardScore s = score_hard(Dimension::kMotionRationality, out, spec, cfg);
  CHECK(s.value < 1.0);
}

TEST_CASE("each defect kind lowers its own dimension's mean score at rate 1") {
  ScorerConfig cfg;
  const std::pair<DefectKind, Dimension> pairs[] = {
      {DefectKind::kTeleport, Dimension::kMotionRationality},
      {DefectKind::kVanish, Dimension::kInstancePreservation},
      {DefectKind::kWrongGravity, Dimension::kMechanicsGravity},
      {DefectKind::kShuffleOrder, Dimension::kDynamicSpatial},
      {DefectKind::kDriftCamera, Dimension::kCameraMotion},
  };
  for (const auto& [kind, dim] : pairs) {
    double clean_sum = 0.0, defected_sum = 0.0;
    std::size_t clean_n = 0, defected_n = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      PromptSpec spec = spec_of(dim, derive_seed(seed, "defect-prompt", static_cast<std::uint64_t>(dim)));
      VideoTrajectory traj = simulate(spec, derive_seed(seed, "defect-sim", static_cast<std::uint64_t>(dim)));
      DefectConfig defects;
      defects.rate = 1.0;
      defects.kinds = {kind};
      defects.magnitude = 0.3;
      defects.seed = derive_seed(seed, "defect-gate", 0);
      VideoTrajectory bad = inject_defects(traj, defects);
      RewardScore clean = score_hard(dim, traj, spec, cfg);
      RewardScore corrupted = score_hard(dim, bad, spec, cfg);
      if (clean.valid) {
        clean_sum += clean.value;
        ++clean_n;
      }
      if (corrupted.valid) {
        defected_sum += corrupted.value;
        ++defected_n;
      }
    }
    REQUIRE(clean_n == 100);
    double clean_mean = clean_sum / static_cast<double>(clean_n);
    double defected_mean = defected_n == 0 ? 0.0 : defected_sum / static_cast<double>(defected_n);
    CHECK_MESSAGE(defected_mean < clean_mean, defect_name(kind), ": defected mean ", defected_mean,
                  " vs clean mean ", clean_mean);
  }
}

TEST_CASE("encode/decode round trip is exact on in-range latents") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Dimension dim = kAllDimensions[seed % 5];
    PromptSpec spec = spec_of(dim, derive_seed(seed, "codec-prompt", 0));
    VideoTrajectory traj = simulate(spec, derive_seed(seed, "codec-sim", 0));
    Tensor latent = encode(traj);
    Tensor again = encode(decode(latent));
    REQUIRE(latent.size() == again.size());
    for (std::size_t i = 0; i < latent.size(); ++i) CHECK(latent[i] == again[i]);
  }
}

TEST_CASE("encode maps centers to zero and decode clamps") {
  WorldConfig world;
  VideoTrajectory traj;
  traj.world = world;
  traj.frames.assign(world.frames, std::vector<ObjectState>(world.objects, ObjectState{0.5, 0.5, 0.125, 0.5}));
  Tensor latent = encode(traj);
  for (double v : latent.data()) CHECK(v == 0.0);

  // All-zero latent decodes to centered objects at half intensity.
  VideoTrajectory back = decode(Tensor::zeros({world.latent_dim()}));
  CHECK(back.frames[0][0].x == 0.5);
  CHECK(back.frames[0][0].r == 0.125);
  CHECK(back.frames[0][0].a == 0.5);

  // Out-of-range latents clamp into the valid field ranges.
  Tensor wild = Tensor::full({world.latent_dim()}, -5.0);
  VideoTrajectory clamped = decode(wild);
  CHECK(clamped.frames[0][0].x == 0.0);
  CHECK(clamped.frames[0][0].r == kMinRadius);
  CHECK(clamped.frames[0][0].a == 0.0);
  CHECK_THROWS_AS(decode(Tensor::zeros({7})), std::invalid_argument);
}

TEST_CASE("rendering: empty frame is black, centered object peaks at center") {
  WorldConfig world;
  VideoTrajectory traj;
  traj.world = world;
  traj.frames.assign(world.frames, std::vector<ObjectState>(world.objects, ObjectState{0.3, 0.7, 0.06, 0.0}));
  auto black = render_frame(traj, 0, 16);
  for (std::uint8_t p : black) CHECK(p == 0);

  traj.frames[0][0] = ObjectState{0.5, 0.5, 0.1, 1.0};
  std::size_t res = 31;
  auto img = render_frame(traj, 0, res);
  std::size_t best = 0;
  for (std::size_t i = 1; i < img.size(); ++i) {
    if (img[i] > img[best]) best = i;
  }
  CHECK(best / res == res / 2);
  CHECK(best % res == res / 2);

  auto img2 = render_frame(traj, 0, res);
  CHECK(img == img2);
  CHECK_THROWS_AS(render_frame(traj, world.frames, 16), std::invalid_argument);
  CHECK_THROWS_AS(render_frame(traj, 0, 4), std::invalid_argument);
}

TEST_CASE("pgm export writes the P5 header and payload") {
  auto path = std::filesystem::temp_directory_path() / "ff_render_test.pgm";
  std::vector<std::uint8_t> pixels(64, 128);
  write_pgm(path, pixels, 8, 8);
  std::ifstream in(path, std::ios::binary);
  std::string header;
  std::getline(in, header);
  CHECK(header == "P5");
  std::string dims;
  std::getline(in, dims);
  CHECK(dims == "8 8");
  std::filesystem::remove(path);
}

TEST_CASE("gravity estimator is exact on oracles and total on junk") {
  PromptSpec spec = spec_of(Dimension::kMechanicsGravity, 40);
  VideoTrajectory traj = simulate(spec, 41);
  GravityEstimate est = estimate_gravity(traj, 0);
  REQUIRE(est.valid);
  CHECK(est.g_hat == doctest::Approx(spec.gravity).epsilon(1e-9));
  CHECK(est.residual_std < 1e-12);

  // Static scene: all frames count as pre-bounce, estimate is zero gravity.
  VideoTrajectory flat;
  flat.world = WorldConfig{};
  flat.frames.assign(16, std::vector<ObjectState>(3, ObjectState{0.5, 0.5, 0.1, 0.8}));
  GravityEstimate still = estimate_gravity(flat, 0);
  CHECK(still.valid);
  CHECK(still.g_hat == 0.0);
}
