// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include "flowforge/cli_commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include "flowforge/evalbench.hpp"
#include "flowforge/hash.hpp"
#include "flowforge/rng.hpp"

namespace flowforge {

namespace {

namespace fs = std::filesystem;

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw MissingInputError(what + " not found: " + path.string());
  }
}

void prepare_out_dir(const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
}

/// Snapshot + manifest make every run replayable: the manifest names the
/// command, the hash and path of the resolved config, the seeds, and the
/// inputs/outputs. No timestamps, so re-runs are byte-identical.
void write_run_metadata(const RunConfig& cfg, const fs::path& out_dir, const std::string& command,
                        const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  std::string snapshot = cfg.serialize();
  {
    std::ofstream out(out_dir / "config_snapshot.cfg", std::ios::trunc);
    if (!out) throw IoError("cannot write config snapshot in " + out_dir.string());
    out << snapshot;
  }
  std::ofstream manifest(out_dir / "manifest.txt", std::ios::trunc);
  if (!manifest) throw IoError("cannot write manifest in " + out_dir.string());
  manifest << "command=" << command << "\n";
  manifest << "config=config_snapshot.cfg\n";
  manifest << "config_hash=" << fnv1a64(snapshot) << "\n";
  manifest << "seed=" << cfg.seed << "\n";
  for (const std::string& in : inputs) manifest << "input=" << in << "\n";
  for (const std::string& out : outputs) manifest << "output=" << out << "\n";
}

AblationConfig ablation_config(const RunConfig& cfg) {
  AblationConfig a;
  a.mix = cfg.mix;
  a.sampler = cfg.sampler;
  a.scorer = cfg.scorer;
  a.loss = cfg.loss;
  a.train = cfg.train;
  a.eval = cfg.eval;
  a.world = cfg.world;
  a.workers = cfg.workers;
  return a;
}

ModelParams load_checkpoint_checked(const fs::path& path, const RunConfig& cfg) {
  require_file(path, "checkpoint");
  ModelParams params = load_checkpoint(path);
  if (params.config.latent_dim != cfg.world.latent_dim()) {
    throw ConfigError("world", "checkpoint latent_dim " + std::to_string(params.config.latent_dim) +
                                   " does not match world latent_dim " + std::to_string(cfg.world.latent_dim()));
  }
  return params;
}

}  // namespace

void cmd_gen_data(const RunConfig& cfg, const std::optional<fs::path>& checkpoint, const fs::path& out_dir) {
  bool needs_model = cfg.mix.include.count(Source::kPsVs) || cfg.mix.include.count(Source::kPrVs);
  std::optional<ModelParams> model;
  if (needs_model) {
    if (!checkpoint.has_value()) {
      throw MissingInputError("synthetic sources in the mix require --checkpoint");
    }
    model = load_checkpoint_checked(*checkpoint, cfg);
  }
  prepare_out_dir(out_dir);
  auto records = build_dataset(cfg.mix, model.has_value() ? &*model : nullptr, cfg.sampler, cfg.world, cfg.workers);
  fs::path dataset_path = out_dir / "dataset.ffds";
  write_dataset(dataset_path, cfg.mix, records);

  std::size_t n_ps = 0, n_rs = 0, n_rr = 0;
  for (const DatasetRecord& rec : records) {
    if (rec.source == Source::kPsVs) ++n_ps;
    else if (rec.source == Source::kPrVs) ++n_rs;
    else ++n_rr;
  }
  std::cout << "PsVs=" << n_ps << " PrVs=" << n_rs << " PrVr=" << n_rr << "\n";
  write_run_metadata(cfg, out_dir, "gen-data",
                     checkpoint.has_value() ? std::vector<std::string>{checkpoint->string()} : std::vector<std::string>{},
                     {"dataset.ffds"});
}

void cmd_pretrain(const RunConfig& cfg, const fs::path& out_dir) {
  prepare_out_dir(out_dir);

  // Defected oracle corpus: clean prompts paired with corrupted clips, the
  // deliberately weak starting point fine-tuning is measured against.
  std::vector<DatasetRecord> corpus;
  corpus.reserve(cfg.pretrain.corpus);
  for (std::size_t i = 0; i < cfg.pretrain.corpus; ++i) {
    Dimension dim = kAllDimensions[i % kAllDimensions.size()];
    PromptSpec spec = gen_base_prompts(dim, 1, derive_seed(cfg.seed, "pretrain/spec", i))[0];
    VideoTrajectory traj = simulate(spec, derive_seed(cfg.seed, "pretrain/sim", i), cfg.world);
    // One shared defect seed across the corpus: the gate buckets prompt
    // space, so similar clips defect together at full strength.
    traj = inject_defects(traj, cfg.pretrain.defects);
    DatasetRecord rec;
    rec.id = i;
    rec.source = Source::kPrVr;
    rec.spec = spec;
    rec.gen_seed = derive_seed(cfg.seed, "pretrain/sim", i);
    rec.latent = encode(traj);
    rec.real_latent = rec.latent;
    corpus.push_back(std::move(rec));
  }
  DataMixConfig corpus_mix = cfg.mix;
  corpus_mix.include = {Source::kPrVr};
  corpus_mix.count_prvr = corpus.size();
  corpus_mix.defects = cfg.pretrain.defects;
  write_dataset(out_dir / "corpus.ffds", corpus_mix, corpus);

  // Plain flow-matching over the whole corpus: every record through the ps
  // route with unit weight, no realism term.
  TrainConfig tcfg = cfg.train;
  tcfg.strategy = Strategy::kSft;
  tcfg.epochs = cfg.pretrain.epochs;
  tcfg.batch_size = cfg.pretrain.batch_size;
  tcfg.learning_rate = cfg.pretrain.learning_rate;
  tcfg.lr_final_fraction = cfg.pretrain.lr_final_fraction;
  tcfg.route_all_ps = true;
  tcfg.seed = derive_seed(cfg.seed, "cli/pretrain_train", 0);
  LossConfig lcfg;
  lcfg.lambda_ps = 1.0;
  lcfg.lambda_pr = 0.0;
  lcfg.lambda_kl = 0.0;

  ModelParams init = init_params(cfg.model);
  auto [params, report] = train(corpus, init, tcfg, lcfg, cfg.mix.target_dimensions, cfg.scorer, cfg.world);
  fs::path ckpt = out_dir / "pretrain.ffck";
  save_checkpoint(params, ckpt);
  report.checkpoint_path = ckpt.string();
  write_train_report(out_dir / "pretrain.trainreport.txt", report, tcfg);
  std::cout << "pretrained on " << corpus.size() << " records for " << tcfg.epochs << " epochs\n";
  write_run_metadata(cfg, out_dir, "pretrain", {}, {"corpus.ffds", "pretrain.ffck", "pretrain.trainreport.txt"});
}

void cmd_finetune(const RunConfig& cfg, const fs::path& base_checkpoint, const fs::path& dataset,
                  const fs::path& out_dir) {
  ModelParams base = load_checkpoint_checked(base_checkpoint, cfg);
  require_file(dataset, "dataset");
  DatasetFile file = read_dataset(dataset);

  if (cfg.train.strategy != Strategy::kSft) {
    for (const DatasetRecord& rec : file.records) {
      if (!rec.reward.has_value()) {
        throw MissingInputError("strategy " + std::string(strategy_name(cfg.train.strategy)) +
                                " needs a scored dataset; run `flowforge score` first");
      }
    }
  }
  prepare_out_dir(out_dir);
  auto [params, report] = train(file.records, base, cfg.train, cfg.loss, cfg.mix.target_dimensions, cfg.scorer,
                                cfg.world);
  fs::path ckpt = out_dir / "finetuned.ffck";
  save_checkpoint(params, ckpt);
  report.checkpoint_path = ckpt.string();
  write_train_report(out_dir / "finetune.trainreport.txt", report, cfg.train);
  std::cout << "strategy=" << strategy_name(cfg.train.strategy) << " used=" << report.samples_used
            << " filtered=" << report.samples_filtered << "\n";
  write_run_metadata(cfg, out_dir, "finetune", {base_checkpoint.string(), dataset.string()},
                     {"finetuned.ffck", "finetune.trainreport.txt"});
}

void cmd_score(const RunConfig& cfg, const fs::path& dataset, const fs::path& out_dir) {
  require_file(dataset, "dataset");
  prepare_out_dir(out_dir);
  fs::path out_path = out_dir / "scored.ffds";
  ScoreSummary summary = score_dataset(dataset, out_path, cfg.scorer, cfg.mix.target_dimensions, cfg.workers,
                                       cfg.world);
  double scorable = summary.n_records == 0
                        ? 0.0
                        : static_cast<double>(summary.n_valid) / static_cast<double>(summary.n_records);
  std::cout << "records=" << summary.n_records << " valid=" << summary.n_valid << " positive=" << summary.n_positive
            << " scorable_fraction=" << format_cell(scorable);
  if (2 * summary.n_valid < summary.n_records) {
    std::cout << " flag=low_validity";
  }
  std::cout << "\n";
  write_run_metadata(cfg, out_dir, "score", {dataset.string()}, {"scored.ffds", "scored.ffds.scores"});
}

void cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& out_dir) {
  ModelParams params = load_checkpoint_checked(checkpoint, cfg);
  prepare_out_dir(out_dir);
  auto results = eval_all(params, cfg.eval, cfg.world);
  Table table = results_to_table("eval", results, fnv1a64(cfg.serialize()), cfg.eval.seed);
  emit_report({table}, out_dir / "eval.csv", ReportFormat::kCsv);
  emit_report({table}, out_dir / "eval.md", ReportFormat::kMarkdown);
  for (const DimensionResult& r : results) {
    std::cout << dimension_name(r.dimension) << " " << format_cell(r.mean_score_percent) << " (scored " << r.n_scored
              << ", invalid " << r.n_invalid << (r.low_validity() ? ", low_validity" : "") << ")\n";
  }
  write_run_metadata(cfg, out_dir, "eval", {checkpoint.string()},
                     {"eval.csv", "eval.md", "eval.csv.manifest", "eval.md.manifest"});
}

void cmd_ablate(const RunConfig& cfg, const std::string& mode, const fs::path& checkpoint,
                const std::optional<fs::path>& dataset, const fs::path& out_dir) {
  ModelParams base = load_checkpoint_checked(checkpoint, cfg);
  prepare_out_dir(out_dir);
  AblationConfig acfg = ablation_config(cfg);
  std::vector<Table> tables;
  std::vector<std::string> inputs{checkpoint.string()};
  if (mode == "data") {
    tables.push_back(ablate_data_sources(base, acfg));
  } else if (mode == "strategy") {
    if (!dataset.has_value()) throw MissingInputError("ablate strategy needs --dataset with a scored dataset");
    require_file(*dataset, "dataset");
    DatasetFile file = read_dataset(*dataset);
    for (const DatasetRecord& rec : file.records) {
      if (!rec.reward.has_value()) {
        throw MissingInputError("ablate strategy needs a scored dataset; run `flowforge score` first");
      }
    }
    inputs.push_back(dataset->string());
    tables.push_back(ablate_strategies(base, file.records, acfg));
  } else if (mode == "combined") {
    tables = ablate_combined(base, cfg.groups, acfg);
  } else {
    throw ConfigError("ablate.mode", "expected data, strategy, or combined");
  }
  fs::path base_path = out_dir / ("ablate_" + mode);
  emit_report(tables, base_path.string() + ".csv", ReportFormat::kCsv);
  emit_report(tables, base_path.string() + ".md", ReportFormat::kMarkdown);
  std::cout << "wrote " << tables.size() << " table(s) to " << base_path.string() << ".{csv,md}\n";
  write_run_metadata(cfg, out_dir, "ablate-" + mode, inputs,
                     {("ablate_" + mode + ".csv"), ("ablate_" + mode + ".md")});
}

void cmd_render(const RunConfig& cfg, const std::optional<fs::path>& dataset, std::optional<std::uint64_t> record_id,
                const std::optional<std::string>& dimension, std::uint64_t sim_seed, std::size_t resolution,
                const fs::path& out_dir) {
  VideoTrajectory traj;
  std::vector<std::string> inputs;
  if (dataset.has_value()) {
    if (!record_id.has_value()) throw MissingInputError("render from a dataset needs --id");
    require_file(*dataset, "dataset");
    DatasetFile file = read_dataset(*dataset);
    const DatasetRecord* found = nullptr;
    for (const DatasetRecord& rec : file.records) {
      if (rec.id == *record_id) found = &rec;
    }
    if (!found) throw MissingInputError("record id " + std::to_string(*record_id) + " not in " + dataset->string());
    traj = decode(found->latent, cfg.world);
    inputs.push_back(dataset->string());
  } else if (dimension.has_value()) {
    Dimension dim;
    try {
      dim = dimension_from_name(*dimension);
    } catch (const std::exception& e) {
      throw ConfigError("render.dimension", e.what());
    }
    PromptSpec spec = gen_base_prompts(dim, 1, derive_seed(cfg.seed, "render/spec", sim_seed))[0];
    traj = simulate(spec, sim_seed, cfg.world);
  } else {
    throw MissingInputError("render needs either --dataset/--id or --dimension");
  }
  prepare_out_dir(out_dir);
  std::vector<std::string> outputs;
  for (std::size_t t = 0; t < traj.frames.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03zu.pgm", t);
    auto pixels = render_frame(traj, t, resolution);
    write_pgm(out_dir / name, pixels, resolution, resolution);
    outputs.emplace_back(name);
  }
  std::cout << "wrote " << traj.frames.size() << " frames at " << resolution << "x" << resolution << "\n";
  write_run_metadata(cfg, out_dir, "render", inputs, outputs);
}

}  // namespace flowforge
