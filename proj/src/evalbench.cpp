// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include "flowforge/evalbench.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "flowforge/hash.hpp"
#include "flowforge/parallel.hpp"
#include "flowforge/rng.hpp"

namespace flowforge {

void EvalConfig::validate() const {
  if (dimensions.empty()) throw std::invalid_argument("eval config: dimensions must be non-empty");
  if (prompts_per_dimension == 0 || samples_per_prompt == 0) {
    throw std::invalid_argument("eval config: counts must be positive");
  }
  sampler.validate();
  scorer.validate();
}

SampleFn model_sampler(const ModelParams& params, const SamplerConfig& sampler) {
  return [&params, sampler](const Prompt& prompt, std::uint64_t seed) {
    SamplerConfig cfg = sampler;
    cfg.seed = seed;
    return sample(params, prompt.cond, cfg);
  };
}

DimensionResult eval_dimension(const SampleFn& sample_fn, Dimension dimension, const EvalConfig& cfg,
                               const WorldConfig& world) {
  cfg.validate();
  // Prompt seeds live under an eval-only namespace so they can never collide
  // with training streams derived from the same base seed.
  std::uint64_t prompt_seed = derive_seed(cfg.seed, "eval/prompts", static_cast<std::uint64_t>(dimension));
  auto specs = gen_base_prompts(dimension, cfg.prompts_per_dimension, prompt_seed);

  std::size_t total = specs.size() * cfg.samples_per_prompt;
  std::vector<RewardScore> scores(total);
  parallel_for(total, cfg.workers, [&](std::size_t i) {
    std::size_t prompt_index = i / cfg.samples_per_prompt;
    Prompt prompt = make_prompt(specs[prompt_index]);
    std::uint64_t sample_seed =
        derive_seed(cfg.seed, "eval/sample", (static_cast<std::uint64_t>(dimension) << 32) | i);
    Tensor latent = sample_fn(prompt, sample_seed);
    scores[i] = score_hard(dimension, decode(latent, world), prompt.spec, cfg.scorer);
  });

  DimensionResult result;
  result.dimension = dimension;
  double sum = 0.0;
  for (const RewardScore& s : scores) {
    if (s.valid) {
      sum += s.value;
      ++result.n_scored;
    } else {
      ++result.n_invalid;
    }
  }
  result.mean_score_percent = result.n_scored == 0 ? 0.0 : 100.0 * sum / static_cast<double>(result.n_scored);
  return result;
}

DimensionResult eval_dimension(const ModelParams& params, Dimension dimension, const EvalConfig& cfg,
                               const WorldConfig& world) {
  return eval_dimension(model_sampler(params, cfg.sampler), dimension, cfg, world);
}

std::vector<DimensionResult> eval_all(const ModelParams& params, const EvalConfig& cfg, const WorldConfig& world) {
  std::vector<DimensionResult> out;
  for (Dimension d : cfg.dimensions) out.push_back(eval_dimension(params, d, cfg, world));
  return out;
}

std::string format_cell(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

Table results_to_table(const std::string& name, const std::vector<DimensionResult>& results, std::uint64_t config_hash,
                       std::uint64_t seed) {
  Table t;
  t.name = name;
  t.columns = {"dimension", "score", "n_scored", "n_invalid", "flag"};
  t.config_hash = config_hash;
  t.seed = seed;
  for (const DimensionResult& r : results) {
    t.rows.push_back({std::string(dimension_name(r.dimension)), format_cell(r.mean_score_percent),
                      std::to_string(r.n_scored), std::to_string(r.n_invalid),
                      r.low_validity() ? "low_validity" : ""});
  }
  return t;
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::string include_label(const std::set<Source>& include) {
  if (include.empty()) return "(none)";
  std::string out;
  for (Source s : include) {
    if (!out.empty()) out += "+";
    out += source_name(s);
  }
  return out;
}

std::map<Dimension, double> eval_scores(const ModelParams& params, const AblationConfig& cfg) {
  std::map<Dimension, double> out;
  for (Dimension d : cfg.eval.dimensions) {
    out[d] = eval_dimension(params, d, cfg.eval, cfg.world).mean_score_percent;
  }
  return out;
}

std::uint64_t ablation_hash(const AblationConfig& cfg) {
  std::string s = cfg.scorer.canonical_string();
  s += ";steps=" + std::to_string(cfg.sampler.steps);
  s += ";scheme=" + std::string(scheme_name(cfg.sampler.scheme));
  s += ";strategy=" + std::string(strategy_name(cfg.train.strategy));
  s += ";lr=" + format_double_roundtrip(cfg.train.learning_rate);
  s += ";epochs=" + std::to_string(cfg.train.epochs);
  return fnv1a64(s);
}

}  // namespace

Table ablate_data_sources(const ModelParams& base, const AblationConfig& cfg) {
  const std::vector<std::set<Source>> rows = {
      {},
      {Source::kPsVs},
      {Source::kPrVs},
      {Source::kPsVs, Source::kPrVs},
      {Source::kPrVs, Source::kPrVr},
      {Source::kPsVs, Source::kPrVs, Source::kPrVr},
  };
  Dimension target = cfg.mix.target_dimensions.front();
  auto base_scores = eval_scores(base, cfg);

  Table table;
  table.name = "ablate_data_sources";
  table.columns = {"sources", "target_score", "target_delta", "nontarget_mean_delta"};
  table.config_hash = ablation_hash(cfg);
  table.seed = cfg.mix.seed;

  for (const auto& include : rows) {
    std::map<Dimension, double> scores;
    if (include.empty()) {
      scores = base_scores;  // no training
    } else {
      DataMixConfig mix = cfg.mix;
      mix.include = include;
      auto records = build_dataset(mix, &base, cfg.sampler, cfg.world, cfg.workers);
      // Score in memory through the same path the file pipeline uses.
      for (DatasetRecord& rec : records) {
        Dimension dim = rec.spec.dimension;
        bool in_targets = false;
        for (Dimension d : mix.target_dimensions) {
          if (dim == d) in_targets = true;
        }
        Dimension score_dim = in_targets ? dim : mix.target_dimensions[0];
        VideoTrajectory traj = decode(rec.latent, cfg.world);
        if (rec.spec.dimension == score_dim) {
          rec.reward = score_hard(score_dim, traj, rec.spec, cfg.scorer);
        } else {
          auto est = estimate_spec_for(score_dim, traj, cfg.scorer);
          rec.reward = est.has_value() ? score_hard(score_dim, traj, *est, cfg.scorer) : RewardScore{0.0, false};
        }
      }
      TrainConfig tcfg = cfg.train;
      tcfg.strategy = Strategy::kReweightOffline;
      auto [tuned, report] = train(records, base, tcfg, cfg.loss, mix.target_dimensions, cfg.scorer, cfg.world);
      (void)report;
      scores = eval_scores(tuned, cfg);
    }
    double target_delta = scores[target] - base_scores[target];
    std::vector<double> nontarget_deltas;
    for (const auto& [dim, score] : scores) {
      if (dim != target) nontarget_deltas.push_back(score - base_scores[dim]);
    }
    table.rows.push_back({include_label(include), format_cell(scores[target]), format_cell(target_delta),
                          format_cell(mean_of(nontarget_deltas))});
  }
  return table;
}

Table ablate_strategies(const ModelParams& base, const std::vector<DatasetRecord>& scored, const AblationConfig& cfg) {
  const Strategy strategies[] = {Strategy::kSft, Strategy::kSftFiltered, Strategy::kReweightOffline,
                                 Strategy::kReweightOnline, Strategy::kBackpropOnline};
  Dimension target = cfg.mix.target_dimensions.front();
  double base_score = eval_dimension(base, target, cfg.eval, cfg.world).mean_score_percent;

  Table table;
  table.name = "ablate_strategies";
  table.columns = {"strategy", "epoch_seconds", "target_score", "target_delta"};
  table.config_hash = ablation_hash(cfg);
  table.seed = cfg.train.seed;
  table.rows.push_back({"(baseline)", "", format_cell(base_score), format_cell(0.0)});

  for (Strategy strategy : strategies) {
    TrainConfig tcfg = cfg.train;
    tcfg.strategy = strategy;
    auto [tuned, report] = train(scored, base, tcfg, cfg.loss, cfg.mix.target_dimensions, cfg.scorer, cfg.world);
    double score = eval_dimension(tuned, target, cfg.eval, cfg.world).mean_score_percent;
    table.rows.push_back({std::string(strategy_name(strategy)), format_cell(mean_of(report.epoch_seconds)),
                          format_cell(score), format_cell(score - base_score)});
  }
  return table;
}

std::vector<Table> ablate_combined(const ModelParams& base,
                                   const std::vector<std::pair<std::string, std::vector<Dimension>>>& groups,
                                   const AblationConfig& cfg) {
  std::vector<Table> tables;
  for (const auto& [group_name, dims] : groups) {
    if (dims.empty()) throw std::invalid_argument("ablate_combined: empty group '" + group_name + "'");
    Table table;
    table.name = "ablate_combined/" + group_name;
    table.columns = {"run"};
    for (Dimension d : dims) table.columns.emplace_back(dimension_name(d));
    table.columns.emplace_back("mean");
    table.config_hash = ablation_hash(cfg);
    table.seed = cfg.mix.seed;

    auto eval_members = [&](const ModelParams& params) {
      std::vector<double> scores;
      for (Dimension d : dims) {
        scores.push_back(eval_dimension(params, d, cfg.eval, cfg.world).mean_score_percent);
      }
      return scores;
    };
    auto push_row = [&](const std::string& label, const std::vector<double>& scores) {
      std::vector<std::string> row{label};
      for (double s : scores) row.push_back(format_cell(s));
      row.push_back(format_cell(mean_of(scores)));
      table.rows.push_back(std::move(row));
    };

    push_row("baseline", eval_members(base));

    auto tune_on = [&](const std::vector<Dimension>& targets) {
      DataMixConfig mix = cfg.mix;
      mix.target_dimensions = targets;
      auto records = build_dataset(mix, &base, cfg.sampler, cfg.world, cfg.workers);
      for (DatasetRecord& rec : records) {
        Dimension dim = rec.spec.dimension;
        bool in_targets = false;
        for (Dimension d : targets) {
          if (dim == d) in_targets = true;
        }
        Dimension score_dim = in_targets ? dim : targets[0];
        VideoTrajectory traj = decode(rec.latent, cfg.world);
        if (rec.spec.dimension == score_dim) {
          rec.reward = score_hard(score_dim, traj, rec.spec, cfg.scorer);
        } else {
          auto est = estimate_spec_for(score_dim, traj, cfg.scorer);
          rec.reward = est.has_value() ? score_hard(score_dim, traj, *est, cfg.scorer) : RewardScore{0.0, false};
        }
      }
      TrainConfig tcfg = cfg.train;
      tcfg.strategy = Strategy::kReweightOffline;
      auto [tuned, report] = train(records, base, tcfg, cfg.loss, targets, cfg.scorer, cfg.world);
      (void)report;
      return tuned;
    };

    // Single-dimension rows: reported per member to mirror the combined row.
    for (Dimension d : dims) {
      ModelParams tuned = tune_on({d});
      push_row("single/" + std::string(dimension_name(d)), eval_members(tuned));
    }
    ModelParams combined = tune_on(dims);
    push_row("combined", eval_members(combined));
    tables.push_back(std::move(table));
  }
  return tables;
}

namespace {

std::string csv_quote(const std::string& cell) {
  bool needs = cell.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

}  // namespace

void emit_report(const std::vector<Table>& tables, const std::filesystem::path& path, ReportFormat format) {
  if (tables.empty()) throw std::invalid_argument("emit_report: no tables");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("emit_report: cannot open " + path.string());
  for (std::size_t i = 0; i < tables.size(); ++i) {
    const Table& t = tables[i];
    if (i) out << "\n";
    if (format == ReportFormat::kCsv) {
      out << "# table: " << t.name << "\n";
      for (std::size_t c = 0; c < t.columns.size(); ++c) {
        if (c) out << ",";
        out << csv_quote(t.columns[c]);
      }
      out << "\n";
      for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
          if (c) out << ",";
          out << csv_quote(row[c]);
        }
        out << "\n";
      }
    } else {
      out << "## " << t.name << "\n\n|";
      for (const auto& col : t.columns) out << " " << col << " |";
      out << "\n|";
      for (std::size_t c = 0; c < t.columns.size(); ++c) out << " --- |";
      out << "\n";
      for (const auto& row : t.rows) {
        out << "|";
        for (const auto& cell : row) out << " " << cell << " |";
        out << "\n";
      }
    }
  }
  if (!out) throw std::runtime_error("emit_report: write failed for " + path.string());

  std::ofstream manifest(path.string() + ".manifest", std::ios::trunc);
  if (!manifest) throw std::runtime_error("emit_report: cannot open manifest for " + path.string());
  for (const Table& t : tables) {
    manifest << "table=" << t.name << " config_hash=" << t.config_hash << " seed=" << t.seed << "\n";
  }
}

}  // namespace flowforge
