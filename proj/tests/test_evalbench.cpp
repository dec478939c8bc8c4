// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "flowforge/evalbench.hpp"
#include "flowforge/rng.hpp"

using namespace flowforge;

namespace {

EvalConfig small_eval() {
  EvalConfig cfg;
  cfg.prompts_per_dimension = 8;
  cfg.samples_per_prompt = 2;
  cfg.seed = 77;
  return cfg;
}

// Oracle replay: ignores the model entirely and returns the encoded oracle
// clip for the prompt.
SampleFn oracle_replay() {
  return [](const Prompt& prompt, std::uint64_t seed) { return encode(simulate(prompt.spec, seed)); };
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("oracle replay scores >= 99 on every dimension") {
  EvalConfig cfg = small_eval();
  for (Dimension dim : kAllDimensions) {
    DimensionResult r = eval_dimension(oracle_replay(), dim, cfg);
    CHECK(r.n_scored + r.n_invalid == cfg.prompts_per_dimension * cfg.samples_per_prompt);
    CHECK(r.n_invalid == 0);
    CHECK(r.mean_score_percent >= 99.0);
    CHECK_FALSE(r.low_validity());
  }
}

TEST_CASE("latents decoding to zero intensity score zero on instance preservation") {
  EvalConfig cfg = small_eval();
  WorldConfig world;
  SampleFn dark = [&](const Prompt&, std::uint64_t) {
    Tensor latent = Tensor::zeros({world.latent_dim()});
    for (std::size_t t = 0; t < world.frames; ++t) {
      for (std::size_t k = 0; k < world.objects; ++k) {
        latent[latent_index(t, k, 3, world)] = -1.0;  // a = 0
      }
    }
    return latent;
  };
  DimensionResult r = eval_dimension(dark, Dimension::kInstancePreservation, cfg);
  CHECK(r.mean_score_percent == 0.0);
}

TEST_CASE("eval is deterministic and flags low validity") {
  EvalConfig cfg = small_eval();
  // All-static latents are unscorable as camera motion.
  SampleFn still = [](const Prompt&, std::uint64_t) { return Tensor::zeros({WorldConfig{}.latent_dim()}); };
  DimensionResult a = eval_dimension(still, Dimension::kCameraMotion, cfg);
  DimensionResult b = eval_dimension(still, Dimension::kCameraMotion, cfg);
  CHECK(a.mean_score_percent == b.mean_score_percent);
  CHECK(a.n_invalid == b.n_invalid);
  CHECK(a.n_invalid == cfg.prompts_per_dimension * cfg.samples_per_prompt);
  CHECK(a.low_validity());
}

TEST_CASE("eval prompt seeds live in a namespace disjoint from training") {
  // The eval stream salt differs from every training-side salt, so the same
  // base seed can never replay training draws.
  std::uint64_t base = 99;
  CHECK(derive_seed(base, "eval/prompts", 0) != derive_seed(base, "data/psvs_prompts", 0));
  CHECK(derive_seed(base, "eval/prompts", 0) != derive_seed(base, "train/epoch", 0));
  CHECK(derive_seed(base, "eval/sample", 0) != derive_seed(base, "data/psvs_sample", 0));
}

TEST_CASE("report cells render at two decimals and files are byte-stable") {
  CHECK(format_cell(80.666) == "80.67");
  CHECK(format_cell(0.0) == "0.00");

  Table t;
  t.name = "demo";
  t.columns = {"name", "score"};
  t.rows = {{"alpha, beta", "80.67"}, {"plain", "12.00"}};
  t.config_hash = 42;
  t.seed = 7;

  auto dir = std::filesystem::temp_directory_path();
  auto csv = dir / "ff_report.csv";
  auto md = dir / "ff_report.md";
  emit_report({t}, csv, ReportFormat::kCsv);
  emit_report({t}, md, ReportFormat::kMarkdown);

  std::string csv_text = slurp(csv);
  CHECK(csv_text.find("\"alpha, beta\"") != std::string::npos);  // RFC-4180 quoting
  std::string md_text = slurp(md);
  CHECK(md_text.find("| alpha, beta |") != std::string::npos);
  CHECK(md_text.find("## demo") != std::string::npos);

  emit_report({t}, dir / "ff_report2.csv", ReportFormat::kCsv);
  CHECK(slurp(dir / "ff_report2.csv") == csv_text);

  std::string manifest = slurp(csv.string() + ".manifest");
  CHECK(manifest.find("table=demo") != std::string::npos);
  CHECK(manifest.find("config_hash=42") != std::string::npos);

  CHECK_THROWS_AS(emit_report({}, csv, ReportFormat::kCsv), std::invalid_argument);

  for (const char* name : {"ff_report.csv", "ff_report.md", "ff_report2.csv"}) {
    std::filesystem::remove(dir / name);
    std::filesystem::remove(dir / (std::string(name) + ".manifest"));
  }
}

TEST_CASE("results_to_table carries the low-validity flag") {
  DimensionResult ok{Dimension::kMotionRationality, 88.4, 10, 0};
  DimensionResult starved{Dimension::kCameraMotion, 50.0, 2, 14};
  Table t = results_to_table("eval", {ok, starved}, 1, 2);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][4] == "");
  CHECK(t.rows[1][4] == "low_validity");
}
