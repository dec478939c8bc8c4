// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include "flowforge/velocity_model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "flowforge/hash.hpp"
#include "flowforge/rng.hpp"

namespace flowforge {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "tanh";
}

Activation activation_from_name(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw std::invalid_argument("unknown activation: " + std::string(name));
}

void ModelConfig::validate() const {
  if (latent_dim == 0 || cond_dim == 0 || time_embed_dim == 0) {
    throw std::invalid_argument("model config: all dims must be positive");
  }
  if (time_embed_dim % 2 != 0) {
    throw std::invalid_argument("model config: time_embed_dim must be even (sin/cos pairs)");
  }
  if (hidden_dims.empty()) {
    throw std::invalid_argument("model config: hidden_dims must be non-empty");
  }
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw std::invalid_argument("model config: hidden dims must be positive");
  }
}

std::size_t ModelParams::param_count() const {
  std::size_t n = 0;
  for (const Tensor& w : weights) n += w.size();
  for (const Tensor& b : biases) n += b.size();
  return n;
}

void ModelParams::validate() const {
  config.validate();
  std::vector<std::size_t> dims;
  dims.push_back(config.input_dim());
  for (std::size_t h : config.hidden_dims) dims.push_back(h);
  dims.push_back(config.latent_dim);
  if (weights.size() != dims.size() - 1 || biases.size() != weights.size()) {
    throw std::invalid_argument("model params: layer count does not match config");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].shape() != std::vector<std::size_t>{dims[i + 1], dims[i]} ||
        biases[i].shape() != std::vector<std::size_t>{dims[i + 1]}) {
      throw std::invalid_argument("model params: layer " + std::to_string(i) + " shape mismatch");
    }
  }
}

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  ModelParams params;
  params.config = config;
  std::vector<std::size_t> dims;
  dims.push_back(config.input_dim());
  for (std::size_t h : config.hidden_dims) dims.push_back(h);
  dims.push_back(config.latent_dim);
  for (std::size_t layer = 0; layer + 1 < dims.size(); ++layer) {
    std::size_t fan_in = dims[layer];
    std::size_t fan_out = dims[layer + 1];
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Rng rng(derive_seed(config.seed, "init/layer", layer));
    std::vector<double> w(fan_out * fan_in);
    for (double& v : w) v = rng.uniform(-bound, bound);
    params.weights.emplace_back(std::vector<std::size_t>{fan_out, fan_in}, std::move(w));
    params.biases.push_back(Tensor::zeros({fan_out}));
  }
  return params;
}

Tensor time_embed(double t, std::size_t dim) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::invalid_argument("time_embed: t must lie in [0,1], got " + std::to_string(t));
  }
  if (dim == 0 || dim % 2 != 0) {
    throw std::invalid_argument("time_embed: dim must be positive and even");
  }
  std::vector<double> out(dim);
  double freq = 1.0;
  for (std::size_t i = 0; i < dim / 2; ++i) {
    out[2 * i] = std::sin(kTwoPi * freq * t);
    out[2 * i + 1] = std::cos(kTwoPi * freq * t);
    freq *= 2.0;
  }
  return Tensor::vector(std::move(out));
}

BoundModel bind_params(Graph& graph, const ModelParams& params, bool trainable) {
  params.validate();
  BoundModel bound;
  bound.params = &params;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    bound.weight_nodes.push_back(graph.leaf(params.weights[i], trainable));
    bound.bias_nodes.push_back(graph.leaf(params.biases[i], trainable));
  }
  return bound;
}

NodeId forward(Graph& graph, const BoundModel& model, NodeId zt, const Tensor& cond, double t) {
  const ModelConfig& cfg = model.params->config;
  if (graph.value(zt).size() != cfg.latent_dim) {
    throw std::invalid_argument("forward: latent length " + std::to_string(graph.value(zt).size()) +
                                " does not match config latent_dim " + std::to_string(cfg.latent_dim));
  }
  if (cond.size() != cfg.cond_dim) {
    throw std::invalid_argument("forward: cond length " + std::to_string(cond.size()) +
                                " does not match config cond_dim " + std::to_string(cfg.cond_dim));
  }
  NodeId extras = graph.constant(cond);
  NodeId embed = graph.constant(time_embed(t, cfg.time_embed_dim));
  NodeId h = graph.concat_last(graph.concat_last(zt, extras), embed);
  std::size_t layers = model.weight_nodes.size();
  for (std::size_t i = 0; i < layers; ++i) {
    h = graph.add(graph.matmul(model.weight_nodes[i], h), model.bias_nodes[i]);
    if (i + 1 < layers) {
      switch (cfg.activation) {
        case Activation::kTanh: h = graph.tanh(h); break;
        case Activation::kRelu: h = graph.relu(h); break;
        case Activation::kSigmoid: h = graph.sigmoid(h); break;
      }
    }
  }
  return h;
}

Tensor forward_value(const ModelParams& params, const Tensor& zt, const Tensor& cond, double t) {
  const ModelConfig& cfg = params.config;
  if (zt.size() != cfg.latent_dim || cond.size() != cfg.cond_dim) {
    throw std::invalid_argument("forward_value: input lengths do not match config");
  }
  if (!zt.all_finite() || !cond.all_finite()) {
    throw std::invalid_argument("forward_value: non-finite input");
  }
  Tensor embed = time_embed(t, cfg.time_embed_dim);
  std::vector<double> h;
  h.reserve(cfg.input_dim());
  h.insert(h.end(), zt.data().begin(), zt.data().end());
  h.insert(h.end(), cond.data().begin(), cond.data().end());
  h.insert(h.end(), embed.data().begin(), embed.data().end());

  std::size_t layers = params.weights.size();
  for (std::size_t layer = 0; layer < layers; ++layer) {
    const Tensor& w = params.weights[layer];
    const Tensor& b = params.biases[layer];
    std::size_t out_dim = w.shape()[0];
    std::size_t in_dim = w.shape()[1];
    std::vector<double> next(out_dim);
    for (std::size_t i = 0; i < out_dim; ++i) {
      double s = 0.0;
      const double* row = w.data().data() + i * in_dim;
      for (std::size_t k = 0; k < in_dim; ++k) s += row[k] * h[k];
      // Same order as the graph path: matmul first, bias added after.
      next[i] = s + b[i];
    }
    if (layer + 1 < layers) {
      switch (cfg.activation) {
        case Activation::kTanh:
          for (double& v : next) v = std::tanh(v);
          break;
        case Activation::kRelu:
          for (double& v : next) v = v > 0.0 ? v : 0.0;
          break;
        case Activation::kSigmoid:
          for (double& v : next) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
          break;
      }
    }
    h = std::move(next);
  }
  return Tensor::vector(std::move(h));
}

BatchBound bind_params_batch(Graph& graph, const ModelParams& params, bool trainable) {
  params.validate();
  BatchBound bound;
  bound.params = &params;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    bound.weight_nodes.push_back(graph.leaf(params.weights[i], trainable));
    bound.bias_col_nodes.push_back(
        graph.leaf(Tensor({params.biases[i].size(), 1}, params.biases[i].data()), trainable));
  }
  return bound;
}

Tensor stack_inputs(const ModelParams& params, const std::vector<Tensor>& zts, const std::vector<Tensor>& conds,
                    const std::vector<double>& ts) {
  const ModelConfig& cfg = params.config;
  std::size_t batch = zts.size();
  if (batch == 0 || conds.size() != batch || ts.size() != batch) {
    throw std::invalid_argument("stack_inputs: batch arrays must be non-empty and aligned");
  }
  std::size_t rows = cfg.input_dim();
  std::vector<double> x(rows * batch);
  for (std::size_t i = 0; i < batch; ++i) {
    if (zts[i].size() != cfg.latent_dim || conds[i].size() != cfg.cond_dim) {
      throw std::invalid_argument("stack_inputs: sample " + std::to_string(i) + " has wrong lengths");
    }
    Tensor embed = time_embed(ts[i], cfg.time_embed_dim);
    std::size_t r = 0;
    for (double v : zts[i].data()) x[(r++) * batch + i] = v;
    for (double v : conds[i].data()) x[(r++) * batch + i] = v;
    for (double v : embed.data()) x[(r++) * batch + i] = v;
  }
  return Tensor({rows, batch}, std::move(x));
}

NodeId forward_batch(Graph& graph, const BatchBound& model, const Tensor& inputs) {
  const ModelConfig& cfg = model.params->config;
  if (inputs.rank() != 2 || inputs.shape()[0] != cfg.input_dim()) {
    throw std::invalid_argument("forward_batch: inputs must be [input_dim, batch]");
  }
  std::size_t batch = inputs.shape()[1];
  NodeId ones = graph.constant(Tensor({1, batch}, std::vector<double>(batch, 1.0)));
  NodeId h = graph.constant(inputs);
  std::size_t layers = model.weight_nodes.size();
  for (std::size_t i = 0; i < layers; ++i) {
    h = graph.add(graph.matmul(model.weight_nodes[i], h), graph.matmul(model.bias_col_nodes[i], ones));
    if (i + 1 < layers) {
      switch (cfg.activation) {
        case Activation::kTanh: h = graph.tanh(h); break;
        case Activation::kRelu: h = graph.relu(h); break;
        case Activation::kSigmoid: h = graph.sigmoid(h); break;
      }
    }
  }
  return h;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

class Reader {
 public:
  Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(u(4)); }
  std::uint64_t u64() { return u(8); }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::uint64_t u(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) {
      throw CheckpointError(CheckpointErrorKind::kTruncated, "checkpoint: truncated file");
    }
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  params.validate();
  std::string payload;
  std::size_t n = params.param_count();
  payload.reserve(n * 8);
  for (std::size_t layer = 0; layer < params.weights.size(); ++layer) {
    for (double v : params.weights[layer].data()) put_f64(payload, v);
    for (double v : params.biases[layer].data()) put_f64(payload, v);
  }

  std::string head;
  head += "FFCK";
  put_u32(head, params.version);
  put_u32(head, static_cast<std::uint32_t>(params.config.latent_dim));
  put_u32(head, static_cast<std::uint32_t>(params.config.cond_dim));
  put_u32(head, static_cast<std::uint32_t>(params.config.time_embed_dim));
  put_u32(head, static_cast<std::uint32_t>(params.config.activation));
  put_u64(head, params.config.seed);
  put_u32(head, static_cast<std::uint32_t>(params.config.hidden_dims.size()));
  for (std::size_t h : params.config.hidden_dims) put_u32(head, static_cast<std::uint32_t>(h));
  put_u64(head, static_cast<std::uint64_t>(n));

  std::string tail;
  put_u64(tail, fnv1a64(payload.data(), payload.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorKind::kIo, "checkpoint: cannot open " + path.string());
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.write(tail.data(), static_cast<std::streamsize>(tail.size()));
  if (!out) throw CheckpointError(CheckpointErrorKind::kIo, "checkpoint: write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::kIo, "checkpoint: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Reader r(bytes);
  if (r.raw(4) != "FFCK") {
    throw CheckpointError(CheckpointErrorKind::kBadMagic, "checkpoint: bad magic in " + path.string());
  }
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::kVersionMismatch,
                          "checkpoint: version v" + std::to_string(version) + " but reader expects v" +
                              std::to_string(kCheckpointVersion));
  }
  ModelConfig cfg;
  cfg.latent_dim = r.u32();
  cfg.cond_dim = r.u32();
  cfg.time_embed_dim = r.u32();
  std::uint32_t act = r.u32();
  if (act > 2) throw CheckpointError(CheckpointErrorKind::kBadField, "checkpoint: bad activation tag");
  cfg.activation = static_cast<Activation>(act);
  cfg.seed = r.u64();
  std::uint32_t n_hidden = r.u32();
  if (n_hidden == 0 || n_hidden > 64) {
    throw CheckpointError(CheckpointErrorKind::kBadField, "checkpoint: implausible hidden layer count");
  }
  cfg.hidden_dims.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) cfg.hidden_dims.push_back(r.u32());
  std::uint64_t n_params = r.u64();

  std::size_t payload_start = r.pos();

  ModelParams params;
  params.config = cfg;
  params.version = version;
  std::vector<std::size_t> dims;
  dims.push_back(cfg.input_dim());
  for (std::size_t h : cfg.hidden_dims) dims.push_back(h);
  dims.push_back(cfg.latent_dim);

  std::size_t expected = 0;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) expected += dims[i + 1] * dims[i] + dims[i + 1];
  if (expected != n_params) {
    throw CheckpointError(CheckpointErrorKind::kBadField, "checkpoint: parameter count does not match config");
  }

  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    std::size_t out_dim = dims[i + 1];
    std::size_t in_dim = dims[i];
    std::vector<double> w(out_dim * in_dim);
    for (double& v : w) v = r.f64();
    std::vector<double> b(out_dim);
    for (double& v : b) v = r.f64();
    params.weights.emplace_back(std::vector<std::size_t>{out_dim, in_dim}, std::move(w));
    params.biases.emplace_back(std::vector<std::size_t>{out_dim}, std::move(b));
  }

  std::size_t payload_end = r.pos();
  std::uint64_t stored = r.u64();
  std::uint64_t actual = fnv1a64(bytes.data() + payload_start, payload_end - payload_start);
  if (stored != actual) {
    throw CheckpointError(CheckpointErrorKind::kChecksumMismatch, "checkpoint: checksum mismatch in " + path.string());
  }
  params.validate();
  return params;
}

}  // namespace flowforge
