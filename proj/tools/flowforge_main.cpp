// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
//
// flowforge: a desk-scale lab for reward-guided fine-tuning of a rectified
// flow model over a synthetic object-trajectory video world.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowforge/cli_commands.hpp"
#include "flowforge/flowmatch.hpp"
#include "flowforge/run_config.hpp"
#include "flowforge/velocity_model.hpp"

namespace {

using flowforge::RunConfig;

RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& sets,
                         std::optional<std::size_t> workers, std::optional<std::uint64_t> seed) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
  for (const std::string& s : sets) cfg.apply_override(s);
  if (workers.has_value()) cfg.workers = *workers;
  if (seed.has_value()) cfg.seed = *seed;
  cfg.finalize();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flowforge: reward-guided rectified-flow fine-tuning lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "configuration file (key/section format)");
  app.add_option("--set", sets, "override a config key: section.key=value")->take_all();
  app.add_option("--workers", workers, "parallel worker pool size (1 = bit-exact sequential)");
  app.add_option("--seed", seed, "override the global seed");

  std::string checkpoint, base_checkpoint, dataset, out_dir, mode, dimension;
  std::optional<std::uint64_t> record_id;
  std::uint64_t sim_seed = 0;
  std::size_t resolution = 64;

  CLI::App* gen = app.add_subcommand("gen-data", "build a three-source training dataset");
  gen->add_option("--checkpoint", checkpoint, "model checkpoint for synthetic sources");
  gen->add_option("--out", out_dir, "output directory")->required();

  CLI::App* pre = app.add_subcommand("pretrain", "train the weak baseline on a defected corpus");
  pre->add_option("--out", out_dir, "output directory")->required();

  CLI::App* fin = app.add_subcommand("finetune", "fine-tune a checkpoint on a dataset");
  fin->add_option("--checkpoint", base_checkpoint, "base checkpoint")->required();
  fin->add_option("--dataset", dataset, "training dataset")->required();
  fin->add_option("--out", out_dir, "output directory")->required();

  CLI::App* sco = app.add_subcommand("score", "fill rewards for a dataset");
  sco->add_option("--dataset", dataset, "dataset to score")->required();
  sco->add_option("--out", out_dir, "output directory")->required();

  CLI::App* eva = app.add_subcommand("eval", "evaluate a checkpoint over the benchmark dimensions");
  eva->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")->required();
  eva->add_option("--out", out_dir, "output directory")->required();

  CLI::App* abl = app.add_subcommand("ablate", "run an ablation study");
  abl->add_option("--mode", mode, "data | strategy | combined")->required();
  abl->add_option("--checkpoint", checkpoint, "pretrained base checkpoint")->required();
  abl->add_option("--dataset", dataset, "scored dataset (strategy mode)");
  abl->add_option("--out", out_dir, "output directory")->required();

  CLI::App* ren = app.add_subcommand("render", "export a trajectory as PGM frames");
  ren->add_option("--dataset", dataset, "dataset holding the record");
  ren->add_option("--id", record_id, "record id to render");
  ren->add_option("--dimension", dimension, "render a fresh oracle clip of this dimension");
  ren->add_option("--sim-seed", sim_seed, "oracle simulation seed");
  ren->add_option("--resolution", resolution, "frame resolution (default 64)");
  ren->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = resolve_config(config_path, sets, workers, seed);
    if (gen->parsed()) {
      flowforge::cmd_gen_data(cfg, checkpoint.empty() ? std::nullopt : std::make_optional<std::filesystem::path>(checkpoint),
                              out_dir);
    } else if (pre->parsed()) {
      flowforge::cmd_pretrain(cfg, out_dir);
    } else if (fin->parsed()) {
      flowforge::cmd_finetune(cfg, base_checkpoint, dataset, out_dir);
    } else if (sco->parsed()) {
      flowforge::cmd_score(cfg, dataset, out_dir);
    } else if (eva->parsed()) {
      flowforge::cmd_eval(cfg, checkpoint, out_dir);
    } else if (abl->parsed()) {
      flowforge::cmd_ablate(cfg, mode, checkpoint,
                            dataset.empty() ? std::nullopt : std::make_optional<std::filesystem::path>(dataset),
                            out_dir);
    } else if (ren->parsed()) {
      flowforge::cmd_render(cfg, dataset.empty() ? std::nullopt : std::make_optional<std::filesystem::path>(dataset),
                            record_id, dimension.empty() ? std::nullopt : std::make_optional(dimension), sim_seed,
                            resolution, out_dir);
    }
  } catch (const flowforge::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const flowforge::MissingInputError& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return 3;
  } catch (const flowforge::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 5;
  } catch (const flowforge::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 4;
  } catch (const flowforge::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
