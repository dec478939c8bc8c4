// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include "flowforge/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "flowforge/parallel.hpp"
#include "flowforge/promptengine.hpp"
#include "flowforge/rng.hpp"

namespace flowforge {

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kSft: return "sft";
    case Strategy::kSftFiltered: return "sft_filtered";
    case Strategy::kReweightOffline: return "reweight_offline";
    case Strategy::kReweightOnline: return "reweight_online";
    case Strategy::kBackpropOnline: return "backprop_online";
  }
  return "sft";
}

Strategy strategy_from_name(std::string_view name) {
  for (int i = 0; i < 5; ++i) {
    auto s = static_cast<Strategy>(i);
    if (strategy_name(s) == name) return s;
  }
  throw std::invalid_argument("unknown strategy: " + std::string(name));
}

void LossConfig::validate() const {
  if (lambda_ps < 0.0 || lambda_pr < 0.0 || lambda_kl < 0.0) {
    throw std::invalid_argument("loss config: lambda values must be >= 0");
  }
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (epochs == 0) throw std::invalid_argument("train config: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning_rate must be positive");
  if (!(lr_final_fraction > 0.0 && lr_final_fraction <= 1.0)) {
    throw std::invalid_argument("train config: lr_final_fraction must lie in (0, 1]");
  }
}

namespace {

struct Draw {
  double t = 0.0;
  Tensor z0;
};

Draw draw_for_record(std::uint64_t draw_seed, std::uint64_t record_id, std::size_t latent_dim) {
  Rng rng(derive_seed(draw_seed, "train/draw", record_id));
  Draw d;
  d.t = rng.uniform();
  std::vector<double> z0(latent_dim);
  for (double& v : z0) v = rng.normal();
  d.z0 = Tensor::vector(std::move(z0));
  return d;
}

double record_weight(const DatasetRecord& rec) {
  if (!rec.reward.has_value() || !rec.reward->valid) {
    throw std::invalid_argument("loss: record " + std::to_string(rec.id) + " lacks a valid reward");
  }
  return rec.reward->value;
}

NodeId mean_of(Graph& g, const std::vector<NodeId>& terms) {
  NodeId acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = g.add(acc, terms[i]);
  return g.scale(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

NodeId loss_ps(Graph& graph, const BoundModel& model, const std::vector<const DatasetRecord*>& batch,
               const LossConfig& cfg, std::uint64_t draw_seed) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("loss_ps: empty batch");
  std::vector<NodeId> terms;
  for (const DatasetRecord* rec : batch) {
    double weight = record_weight(*rec);
    Draw d = draw_for_record(draw_seed, rec->id, rec->latent.size());
    FlowPoint p = make_flow_point(d.z0, rec->latent, d.t);
    NodeId zt = graph.constant(p.zt);
    NodeId u = forward(graph, model, zt, encode_conditioning(rec->spec), d.t);
    terms.push_back(graph.scale(fm_loss(graph, u, p.vt), weight));
  }
  return mean_of(graph, terms);
}

NodeId kl_realism(Graph& graph, const std::vector<NodeId>& pred_clean, const std::vector<Tensor>& real, KlMode mode) {
  if (pred_clean.empty() || pred_clean.size() != real.size()) {
    throw std::invalid_argument("kl_realism: batch sizes must match and be non-empty");
  }
  std::size_t dim = real[0].size();
  for (std::size_t i = 0; i < real.size(); ++i) {
    if (graph.value(pred_clean[i]).size() != dim || real[i].size() != dim) {
      throw std::invalid_argument("kl_realism: shape mismatch");
    }
  }
  if (mode == KlMode::kPointwise) {
    std::vector<NodeId> terms;
    for (std::size_t i = 0; i < real.size(); ++i) {
      terms.push_back(graph.scale(graph.mean(graph.square(graph.sub(pred_clean[i], graph.constant(real[i])))), 0.5));
    }
    return mean_of(graph, terms);
  }

  // gaussian_moment: diagonal Gaussians fitted over the batch axis.
  std::size_t n = pred_clean.size();
  if (n < 2) throw std::invalid_argument("kl_realism: gaussian_moment needs a batch of >= 2");
  constexpr double kVarFloor = 1e-6;

  NodeId mu_p = pred_clean[0];
  for (std::size_t i = 1; i < n; ++i) mu_p = graph.add(mu_p, pred_clean[i]);
  mu_p = graph.scale(mu_p, 1.0 / static_cast<double>(n));
  NodeId var_p = graph.square(graph.sub(pred_clean[0], mu_p));
  for (std::size_t i = 1; i < n; ++i) var_p = graph.add(var_p, graph.square(graph.sub(pred_clean[i], mu_p)));
  var_p = graph.scale(var_p, 1.0 / static_cast<double>(n));
  NodeId floor_node = graph.constant(Tensor::full({dim}, kVarFloor));
  var_p = graph.add(graph.relu(graph.sub(var_p, floor_node)), floor_node);  // max(var, floor)

  std::vector<double> mu_r(dim, 0.0), var_r(dim, 0.0);
  for (const Tensor& r : real) {
    for (std::size_t d = 0; d < dim; ++d) mu_r[d] += r[d];
  }
  for (double& v : mu_r) v /= static_cast<double>(n);
  for (const Tensor& r : real) {
    for (std::size_t d = 0; d < dim; ++d) var_r[d] += (r[d] - mu_r[d]) * (r[d] - mu_r[d]);
  }
  std::vector<double> log_var_r(dim), inv_var_r(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    var_r[d] = std::max(var_r[d] / static_cast<double>(n), kVarFloor);
    log_var_r[d] = std::log(var_r[d]);
    inv_var_r[d] = 1.0 / var_r[d];
  }

  NodeId mu_diff2 = graph.square(graph.sub(mu_p, graph.constant(Tensor::vector(std::vector<double>(mu_r)))));
  NodeId ratio = graph.mul(graph.add(var_p, mu_diff2), graph.constant(Tensor::vector(std::move(inv_var_r))));
  NodeId log_term = graph.sub(graph.constant(Tensor::vector(std::move(log_var_r))), graph.log(var_p));
  NodeId inner = graph.sub(graph.add(log_term, ratio), graph.constant(Tensor::full({dim}, 1.0)));
  return graph.scale(graph.mean(inner), 0.5);
}

NodeId loss_pr(Graph& graph, const BoundModel& model, const std::vector<const DatasetRecord*>& batch,
               const LossConfig& cfg, std::uint64_t draw_seed) {
  cfg.validate();
  if (batch.empty()) throw std::invalid_argument("loss_pr: empty batch");
  std::vector<NodeId> fm_terms;
  std::vector<NodeId> cleans;
  std::vector<Tensor> reals;
  for (const DatasetRecord* rec : batch) {
    if (!rec->real_latent.has_value()) {
      throw std::invalid_argument("loss_pr: record " + std::to_string(rec->id) + " has no real latent");
    }
    double weight = record_weight(*rec);
    const Tensor& z1 = *rec->real_latent;  // flow target is the real clip
    Draw d = draw_for_record(draw_seed, rec->id, z1.size());
    FlowPoint p = make_flow_point(d.z0, z1, d.t);
    NodeId zt = graph.constant(p.zt);
    NodeId u = forward(graph, model, zt, encode_conditioning(rec->spec), d.t);
    fm_terms.push_back(graph.scale(fm_loss(graph, u, p.vt), weight));
    cleans.push_back(predicted_clean(graph, u, graph.constant(d.z0)));
    reals.push_back(z1);
  }
  if (cfg.kl_mode == KlMode::kPointwise) {
    std::vector<NodeId> terms;
    for (std::size_t i = 0; i < fm_terms.size(); ++i) {
      NodeId kl = kl_realism(graph, {cleans[i]}, {reals[i]}, KlMode::kPointwise);
      terms.push_back(graph.add(fm_terms[i], graph.scale(kl, cfg.lambda_kl)));
    }
    return mean_of(graph, terms);
  }
  NodeId kl = kl_realism(graph, cleans, reals, KlMode::kGaussianMoment);
  return graph.add(mean_of(graph, fm_terms), graph.scale(kl, cfg.lambda_kl));
}

NodeId total_loss(Graph& graph, const BoundModel& model, const std::vector<const DatasetRecord*>& ps_batch,
                  const std::vector<const DatasetRecord*>& pr_batch, const LossConfig& cfg, std::uint64_t draw_seed) {
  if (ps_batch.empty() && pr_batch.empty()) throw std::invalid_argument("total_loss: both batches empty");
  NodeId total = graph.constant(Tensor::scalar(0.0));
  if (!ps_batch.empty()) {
    total = graph.add(total, graph.scale(loss_ps(graph, model, ps_batch, cfg, draw_seed), cfg.lambda_ps));
  }
  if (!pr_batch.empty()) {
    total = graph.add(total, graph.scale(loss_pr(graph, model, pr_batch, cfg, draw_seed), cfg.lambda_pr));
  }
  return total;
}

GradSet collect_grads(const Graph& graph, const BoundModel& model) {
  GradSet out;
  for (NodeId id : model.weight_nodes) out.weights.push_back(graph.grad(id));
  for (NodeId id : model.bias_nodes) out.biases.push_back(graph.grad(id));
  return out;
}

AdamState AdamState::init_like(const ModelParams& params) {
  AdamState s;
  for (const Tensor& w : params.weights) {
    s.m_w.push_back(Tensor::zeros(w.shape()));
    s.v_w.push_back(Tensor::zeros(w.shape()));
  }
  for (const Tensor& b : params.biases) {
    s.m_b.push_back(Tensor::zeros(b.shape()));
    s.v_b.push_back(Tensor::zeros(b.shape()));
  }
  return s;
}

namespace {

void adam_update_tensor(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, double lr, double beta1, double beta2,
                        double eps, double bias1, double bias2) {
  if (!param.same_shape(grad)) throw std::invalid_argument("adam_step: gradient shape mismatch");
  for (std::size_t i = 0; i < param.size(); ++i) {
    double g = grad[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    double m_hat = m[i] / bias1;
    double v_hat = v[i] / bias2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace

void adam_step(ModelParams& params, const GradSet& grads, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  if (grads.weights.size() != params.weights.size() || grads.biases.size() != params.biases.size()) {
    throw std::invalid_argument("adam_step: layer count mismatch");
  }
  state.step += 1;
  double bias1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  double bias2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    adam_update_tensor(params.weights[l], grads.weights[l], state.m_w[l], state.v_w[l], lr, beta1, beta2, eps, bias1,
                       bias2);
    adam_update_tensor(params.biases[l], grads.biases[l], state.m_b[l], state.v_b[l], lr, beta1, beta2, eps, bias1,
                       bias2);
  }
}

void sgd_step(ModelParams& params, const GradSet& grads, double lr) {
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    for (std::size_t i = 0; i < params.weights[l].size(); ++i) params.weights[l][i] -= lr * grads.weights[l][i];
    for (std::size_t i = 0; i < params.biases[l].size(); ++i) params.biases[l][i] -= lr * grads.biases[l][i];
  }
}

namespace {

Dimension target_of(const DatasetRecord& rec, const std::vector<Dimension>& targets) {
  for (Dimension d : targets) {
    if (rec.spec.dimension == d) return d;
  }
  return targets[0];
}

/// Spec to score a record against its target dimension: the record's own
/// prompt when it matches, otherwise parameters estimated offline from the
/// record's clip.
std::optional<PromptSpec> scoring_spec(const DatasetRecord& rec, const std::vector<Dimension>& targets,
                                       const ScorerConfig& scfg, const WorldConfig& world) {
  Dimension dim = target_of(rec, targets);
  if (rec.spec.dimension == dim) return rec.spec;
  return estimate_spec_for(dim, decode(rec.latent, world), scfg);
}

Tensor refine_clean_value(const ModelParams& params, const Tensor& zt, const Tensor& cond, double t,
                          std::size_t steps) {
  auto field = [&](const Tensor& z, double tau) { return forward_value(params, z, cond, tau); };
  return integrate(field, zt, t, steps, Scheme::kEuler);
}

/// Single-column forward on the batched parameter binding: the latent rows
/// of the input come from the live node, the cond/time rows are constant.
NodeId forward_col(Graph& g, const BatchBound& model, NodeId z_col, const Tensor& cond, double t) {
  const ModelConfig& cfg = model.params->config;
  std::size_t in_dim = cfg.input_dim();
  std::vector<double> inject(in_dim * cfg.latent_dim, 0.0);
  for (std::size_t i = 0; i < cfg.latent_dim; ++i) inject[i * cfg.latent_dim + i] = 1.0;
  std::vector<double> rest(in_dim, 0.0);
  Tensor embed = time_embed(t, cfg.time_embed_dim);
  for (std::size_t i = 0; i < cfg.cond_dim; ++i) rest[cfg.latent_dim + i] = cond[i];
  for (std::size_t i = 0; i < cfg.time_embed_dim; ++i) rest[cfg.latent_dim + cfg.cond_dim + i] = embed[i];
  NodeId input = g.add(g.matmul(g.constant(Tensor({in_dim, cfg.latent_dim}, std::move(inject))), z_col),
                       g.constant(Tensor({in_dim, 1}, std::move(rest))));
  NodeId ones = g.constant(Tensor({1, 1}, {1.0}));
  NodeId h = input;
  std::size_t layers = model.weight_nodes.size();
  for (std::size_t i = 0; i < layers; ++i) {
    h = g.add(g.matmul(model.weight_nodes[i], h), g.matmul(model.bias_col_nodes[i], ones));
    if (i + 1 < layers) {
      switch (cfg.activation) {
        case Activation::kTanh: h = g.tanh(h); break;
        case Activation::kRelu: h = g.relu(h); break;
        case Activation::kSigmoid: h = g.sigmoid(h); break;
      }
    }
  }
  return h;
}

/// In-graph Euler refinement from (z_t, t) to t=1 so gradients flow through
/// every step of the short solve.
NodeId refine_clean_node_col(Graph& g, const BatchBound& model, NodeId zt, const Tensor& cond, double t,
                             std::size_t steps) {
  double h = (1.0 - t) / static_cast<double>(steps);
  NodeId z = zt;
  double tau = t;
  for (std::size_t s = 0; s < steps; ++s) {
    z = g.add(z, g.scale(forward_col(g, model, z, cond, tau), h));
    tau = t + (1.0 - t) * static_cast<double>(s + 1) / static_cast<double>(steps);
  }
  return z;
}

GradSet collect_grads_batch(const Graph& graph, const BatchBound& model) {
  GradSet out;
  for (NodeId id : model.weight_nodes) out.weights.push_back(graph.grad(id));
  for (NodeId id : model.bias_col_nodes) {
    const Tensor& g = graph.grad(id);
    out.biases.push_back(Tensor({g.size()}, g.data()));
  }
  return out;
}

/// Scoped kernel-pool override for the duration of a training run.
struct KernelWorkerGuard {
  explicit KernelWorkerGuard(std::size_t workers) : previous(kernel_workers()) { set_kernel_workers(workers); }
  ~KernelWorkerGuard() { set_kernel_workers(previous); }
  std::size_t previous;
};

}  // namespace

std::pair<ModelParams, TrainReport> train(const std::vector<DatasetRecord>& dataset, const ModelParams& init,
                                          const TrainConfig& train_cfg, const LossConfig& loss_cfg,
                                          const std::vector<Dimension>& targets, const ScorerConfig& scorer_cfg,
                                          const WorldConfig& world) {
  train_cfg.validate();
  loss_cfg.validate();
  scorer_cfg.validate();
  if (targets.empty()) throw std::invalid_argument("train: targets must be non-empty");
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

  bool needs_rewards = train_cfg.strategy != Strategy::kSft;
  if (needs_rewards) {
    for (const DatasetRecord& rec : dataset) {
      if (!rec.reward.has_value()) {
        throw std::invalid_argument("train: strategy " + std::string(strategy_name(train_cfg.strategy)) +
                                    " requires a scored dataset (run scoring first)");
      }
    }
  }

  std::vector<DatasetRecord> records;
  switch (train_cfg.strategy) {
    case Strategy::kSft:
      records = dataset;
      for (DatasetRecord& rec : records) rec.reward = RewardScore{1.0, true};
      break;
    case Strategy::kSftFiltered:
      records = filter_records(dataset);
      for (DatasetRecord& rec : records) rec.reward = RewardScore{1.0, true};
      break;
    case Strategy::kReweightOffline:
      records = filter_records(dataset);
      break;
    case Strategy::kReweightOnline:
      records = filter_records(dataset);
      break;
    case Strategy::kBackpropOnline:
      records = filter_records(dataset);
      for (DatasetRecord& rec : records) rec.reward = RewardScore{1.0, true};
      break;
  }
  if (records.empty()) throw std::invalid_argument("train: no records left after filtering");

  // Per-record scoring specs for the online strategies, fixed before training.
  std::vector<std::optional<PromptSpec>> online_specs;
  bool online = train_cfg.strategy == Strategy::kReweightOnline || train_cfg.strategy == Strategy::kBackpropOnline;
  if (online) {
    online_specs.resize(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      online_specs[i] = scoring_spec(records[i], targets, scorer_cfg, world);
    }
  }

  KernelWorkerGuard kernel_guard(train_cfg.workers);
  ModelParams params = init;
  AdamState adam = AdamState::init_like(params);
  TrainReport report;
  report.samples_used = records.size();
  report.samples_filtered = dataset.size() - records.size();

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);

  std::size_t total_steps = train_cfg.epochs * ((records.size() + train_cfg.batch_size - 1) / train_cfg.batch_size);
  std::size_t step_index = 0;
  auto lr_at = [&](std::size_t step) {
    if (train_cfg.lr_final_fraction >= 1.0 || total_steps <= 1) return train_cfg.learning_rate;
    double frac = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    return train_cfg.learning_rate * (1.0 + (train_cfg.lr_final_fraction - 1.0) * frac);
  };

  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(train_cfg.seed, "train/shuffle", epoch));
    shuffle_rng.shuffle(order);
    std::uint64_t draw_seed = derive_seed(train_cfg.seed, "train/epoch", epoch);

    auto epoch_start = std::chrono::steady_clock::now();
    for (std::size_t begin = 0; begin < order.size(); begin += train_cfg.batch_size) {
      std::size_t end = std::min(order.size(), begin + train_cfg.batch_size);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      std::size_t n = batch.size();

      // Per-record route and loss weight, online strategies re-scoring from
      // the predicted clean latent (value path only, no gradient).
      std::vector<char> is_ps(n);
      std::vector<double> weight(n);
      std::vector<char> has_soft(n, 0);
      parallel_for(n, train_cfg.workers, [&](std::size_t i) {
        const DatasetRecord& rec = records[batch[i]];
        is_ps[i] = train_cfg.route_all_ps || rec.source == Source::kPsVs;
        weight[i] = record_weight(rec);
        if (train_cfg.strategy == Strategy::kReweightOnline) {
          Draw d = draw_for_record(draw_seed, rec.id, rec.latent.size());
          const Tensor& z1 = is_ps[i] ? rec.latent : *rec.real_latent;
          FlowPoint p = make_flow_point(d.z0, z1, d.t);
          Tensor clean;
          if (train_cfg.online_sampler_steps == 0) {
            clean = predicted_clean_value(forward_value(params, p.zt, encode_conditioning(rec.spec), d.t), d.z0);
          } else {
            clean =
                refine_clean_value(params, p.zt, encode_conditioning(rec.spec), d.t, train_cfg.online_sampler_steps);
          }
          double w = 0.0;
          const auto& spec = online_specs[batch[i]];
          if (spec.has_value()) {
            RewardScore s = score_hard(spec->dimension, decode(clean, world), *spec, scorer_cfg);
            if (s.valid) w = s.value;
          }
          weight[i] = w;
        }
        if (train_cfg.strategy == Strategy::kBackpropOnline && online_specs[batch[i]].has_value()) {
          has_soft[i] = 1;
        }
      });

      std::size_t n_ps = 0, n_pr = 0, n_soft = 0;
      for (std::size_t i = 0; i < n; ++i) {
        (is_ps[i] ? n_ps : n_pr) += 1;
        n_soft += static_cast<std::size_t>(has_soft[i]);
      }

      // One graph per step: the whole batch flows through matrix-matrix
      // products, and large kernels fan out over the worker pool.
      Graph graph;
      BatchBound bound = bind_params_batch(graph, params, true);
      std::vector<FlowPoint> points;
      points.reserve(n);
      std::vector<Tensor> zts, conds;
      std::vector<double> ts;
      for (std::size_t i = 0; i < n; ++i) {
        const DatasetRecord& rec = records[batch[i]];
        Draw d = draw_for_record(draw_seed, rec.id, rec.latent.size());
        const Tensor& z1 = is_ps[i] ? rec.latent : *rec.real_latent;
        points.push_back(make_flow_point(d.z0, z1, d.t));
        zts.push_back(points.back().zt);
        conds.push_back(encode_conditioning(rec.spec));
        ts.push_back(d.t);
      }
      NodeId velocities = forward_batch(graph, bound, stack_inputs(params, zts, conds, ts));

      NodeId loss = graph.constant(Tensor::scalar(0.0));
      std::vector<NodeId> pr_cleans;
      std::vector<Tensor> pr_reals;
      std::vector<std::size_t> pr_index;
      for (std::size_t i = 0; i < n; ++i) {
        NodeId u = graph.slice_last(velocities, i, 1);
        const FlowPoint& p = points[i];
        std::size_t dim = p.vt.size();
        NodeId fm = graph.scale(fm_loss(graph, u, graph.constant(Tensor({dim, 1}, p.vt.data()))), weight[i]);
        double coeff = is_ps[i] ? loss_cfg.lambda_ps / static_cast<double>(n_ps)
                                : loss_cfg.lambda_pr / static_cast<double>(n_pr);
        NodeId clean = 0;
        bool need_clean = !is_ps[i] || has_soft[i];
        if (need_clean) {
          clean = predicted_clean(graph, u, graph.constant(Tensor({dim, 1}, p.z0.data())));
        }
        if (is_ps[i]) {
          loss = graph.add(loss, graph.scale(fm, coeff));
        } else {
          Tensor real_col({dim, 1}, p.z1.data());
          if (loss_cfg.kl_mode == KlMode::kPointwise) {
            NodeId kl = kl_realism(graph, {clean}, {real_col}, KlMode::kPointwise);
            loss = graph.add(loss, graph.scale(graph.add(fm, graph.scale(kl, loss_cfg.lambda_kl)), coeff));
          } else {
            loss = graph.add(loss, graph.scale(fm, coeff));
            pr_cleans.push_back(clean);
            pr_reals.push_back(real_col);
            pr_index.push_back(i);
          }
        }
        if (has_soft[i]) {
          const PromptSpec& spec = *online_specs[batch[i]];
          NodeId clean_for_score = clean;
          if (train_cfg.online_sampler_steps > 0) {
            clean_for_score = refine_clean_node_col(graph, bound, graph.constant(Tensor({dim, 1}, p.zt.data())),
                                                    conds[i], ts[i], train_cfg.online_sampler_steps);
          }
          NodeId soft = score_soft(graph, spec.dimension, clean_for_score, spec, scorer_cfg, world);
          loss = graph.add(loss, graph.scale(soft, -1.0 / static_cast<double>(n_soft)));
        }
      }
      if (!pr_cleans.empty()) {
        // Moment-matched realism term over the whole pr sub-batch.
        NodeId kl = kl_realism(graph, pr_cleans, pr_reals, KlMode::kGaussianMoment);
        loss = graph.add(loss, graph.scale(kl, loss_cfg.lambda_pr * loss_cfg.lambda_kl));
      }

      graph.backward(loss);
      double loss_value = graph.value(loss)[0];
      GradSet grads = collect_grads_batch(graph, bound);

      if (!std::isfinite(loss_value)) {
        throw NumericalError("train: non-finite loss at step " + std::to_string(report.step_losses.size()));
      }
      report.step_losses.push_back(loss_value);

      double lr = lr_at(step_index++);
      if (train_cfg.optimizer == OptimizerKind::kAdam) {
        adam_step(params, grads, adam, lr, train_cfg.beta1, train_cfg.beta2, train_cfg.adam_eps);
      } else {
        sgd_step(params, grads, lr);
      }
    }
    auto epoch_end = std::chrono::steady_clock::now();
    report.epoch_seconds.push_back(std::chrono::duration<double>(epoch_end - epoch_start).count());
  }
  return {std::move(params), std::move(report)};
}

void write_train_report(const std::filesystem::path& path, const TrainReport& report, const TrainConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("train report: cannot open " + path.string());
  out << "#flowforge-trainreport v1\n";
  out << "strategy=" << strategy_name(cfg.strategy) << " epochs=" << cfg.epochs << " batch_size=" << cfg.batch_size
      << " learning_rate=" << format_double_roundtrip(cfg.learning_rate) << " seed=" << cfg.seed << "\n";
  out << "samples_used=" << report.samples_used << " samples_filtered=" << report.samples_filtered << "\n";
  out << "epoch_seconds=";
  for (std::size_t i = 0; i < report.epoch_seconds.size(); ++i) {
    if (i) out << ",";
    out << format_double_roundtrip(report.epoch_seconds[i]);
  }
  out << "\n";
  for (std::size_t i = 0; i < report.step_losses.size(); ++i) {
    out << "step " << i << " " << format_double_roundtrip(report.step_losses[i]) << "\n";
  }
}

}  // namespace flowforge
