// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include "flowforge/dataset.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "flowforge/parallel.hpp"
#include "flowforge/rng.hpp"

namespace flowforge {

namespace {

constexpr std::string_view kHeaderTag = "#flowforge-dataset v1";

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = text.find(sep, pos);
    if (next == std::string_view::npos) {
      out.emplace_back(text.substr(pos));
      return out;
    }
    out.emplace_back(text.substr(pos, next - pos));
    pos = next + 1;
  }
}

double parse_double_strict(const std::string& s, const char* what) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty()) {
    throw std::invalid_argument(std::string("dataset: bad ") + what + " '" + s + "'");
  }
  return v;
}

std::string join_floats(const Tensor& t) {
  std::string out;
  out.reserve(t.size() * 20);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) out.push_back(',');
    out += format_double_roundtrip(t[i]);
  }
  return out;
}

Tensor parse_floats(const std::string& text, const char* what) {
  std::vector<double> values;
  for (const std::string& item : split(text, ',')) {
    values.push_back(parse_double_strict(item, what));
  }
  return Tensor::vector(std::move(values));
}

}  // namespace

std::string format_double_roundtrip(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string_view source_name(Source s) {
  switch (s) {
    case Source::kPsVs: return "PsVs";
    case Source::kPrVs: return "PrVs";
    case Source::kPrVr: return "PrVr";
  }
  return "PsVs";
}

Source source_from_name(std::string_view name) {
  if (name == "PsVs") return Source::kPsVs;
  if (name == "PrVs") return Source::kPrVs;
  if (name == "PrVr") return Source::kPrVr;
  throw std::invalid_argument("unknown source tag: " + std::string(name));
}

void DatasetRecord::validate() const {
  spec.validate();
  switch (source) {
    case Source::kPsVs:
      if (real_latent.has_value()) throw std::invalid_argument("record: PsVs must not carry a real latent");
      break;
    case Source::kPrVs:
      if (!real_latent.has_value()) throw std::invalid_argument("record: PrVs requires a real latent");
      break;
    case Source::kPrVr: {
      if (!real_latent.has_value()) throw std::invalid_argument("record: PrVr requires a real latent");
      const Tensor& r = *real_latent;
      if (!r.same_shape(latent)) throw std::invalid_argument("record: PrVr latent shape mismatch");
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] != latent[i]) throw std::invalid_argument("record: PrVr latent must equal real latent");
      }
      break;
    }
  }
  if (reward.has_value() && reward->valid && !(reward->value >= 0.0 && reward->value <= 1.0)) {
    throw std::invalid_argument("record: valid reward outside [0,1]");
  }
}

void DataMixConfig::validate() const {
  if (include.empty()) throw std::invalid_argument("data mix: include set must be non-empty");
  if (include.count(Source::kPsVs) && count_psvs == 0) throw std::invalid_argument("data mix: PsVs count must be positive");
  if (include.count(Source::kPrVs) && count_prvs == 0) throw std::invalid_argument("data mix: PrVs count must be positive");
  if (include.count(Source::kPrVr) && count_prvr == 0) throw std::invalid_argument("data mix: PrVr count must be positive");
  if (target_dimensions.empty()) throw std::invalid_argument("data mix: target_dimensions must be non-empty");
  if (variants_per_base == 0) throw std::invalid_argument("data mix: variants_per_base must be >= 1");
  defects.validate();
}

std::size_t DataMixConfig::total_count() const {
  std::size_t n = 0;
  if (include.count(Source::kPsVs)) n += count_psvs;
  if (include.count(Source::kPrVs)) n += count_prvs;
  if (include.count(Source::kPrVr)) n += count_prvr;
  return n;
}

namespace {

/// PsVs prompt list: bases plus variants per target dimension, truncated to
/// the requested count.
std::vector<PromptSpec> psvs_specs(const DataMixConfig& mix) {
  std::vector<PromptSpec> out;
  std::size_t n_dims = mix.target_dimensions.size();
  for (std::size_t d = 0; d < n_dims; ++d) {
    std::size_t share = mix.count_psvs / n_dims + (d < mix.count_psvs % n_dims ? 1 : 0);
    if (share == 0) continue;
    std::size_t per_base = 1 + mix.variants_per_base;
    std::size_t n_base = (share + per_base - 1) / per_base;
    std::uint64_t dim_seed = derive_seed(mix.seed, "data/psvs_prompts", d);
    auto bases = gen_base_prompts(mix.target_dimensions[d], n_base, dim_seed);
    std::vector<PromptSpec> pool;
    for (std::size_t b = 0; b < bases.size(); ++b) {
      pool.push_back(bases[b]);
      auto variants = augment(bases[b], mix.variants_per_base, derive_seed(dim_seed, "data/psvs_variants", b));
      pool.insert(pool.end(), variants.begin(), variants.end());
    }
    pool.resize(share);
    out.insert(out.end(), pool.begin(), pool.end());
  }
  return out;
}

/// Real-corpus spec for record i: caption dimensions mix uniformly over all
/// five axes, standing in for the natural distribution of real clips.
PromptSpec real_corpus_spec(std::uint64_t seed, std::string_view stream, std::size_t i) {
  Dimension dim = kAllDimensions[i % kAllDimensions.size()];
  std::uint64_t s = derive_seed(seed, stream, i);
  return gen_base_prompts(dim, 1, s)[0];
}

}  // namespace

std::vector<DatasetRecord> build_dataset(const DataMixConfig& mix, const ModelParams* model,
                                         const SamplerConfig& sampler, const WorldConfig& world, std::size_t workers) {
  mix.validate();
  bool needs_model = mix.include.count(Source::kPsVs) || mix.include.count(Source::kPrVs);
  if (needs_model && model == nullptr) {
    throw std::invalid_argument("build_dataset: synthetic sources require a model checkpoint");
  }
  if (model != nullptr && model->config.latent_dim != world.latent_dim()) {
    throw std::invalid_argument("build_dataset: model latent_dim does not match world");
  }

  std::vector<DatasetRecord> records;
  if (mix.include.count(Source::kPsVs)) {
    auto specs = psvs_specs(mix);
    std::size_t base_id = records.size();
    records.resize(base_id + specs.size());
    parallel_for(specs.size(), workers, [&](std::size_t i) {
      DatasetRecord rec;
      rec.id = base_id + i;
      rec.source = Source::kPsVs;
      rec.spec = specs[i];
      rec.gen_seed = derive_seed(mix.seed, "data/psvs_sample", i);
      SamplerConfig cfg = sampler;
      cfg.seed = rec.gen_seed;
      rec.latent = sample(*model, encode_conditioning(rec.spec), cfg);
      records[base_id + i] = std::move(rec);
    });
  }
  if (mix.include.count(Source::kPrVs)) {
    std::size_t base_id = records.size();
    records.resize(base_id + mix.count_prvs);
    parallel_for(mix.count_prvs, workers, [&](std::size_t i) {
      PromptSpec oracle_spec = real_corpus_spec(mix.seed, "data/prvs_world", i);
      VideoTrajectory traj = simulate(oracle_spec, derive_seed(mix.seed, "data/prvs_sim", i), world);
      DatasetRecord rec;
      rec.id = base_id + i;
      rec.source = Source::kPrVs;
      rec.spec = caption_from_trajectory(traj);
      rec.gen_seed = derive_seed(mix.seed, "data/prvs_sample", i);
      SamplerConfig cfg = sampler;
      cfg.seed = rec.gen_seed;
      rec.latent = sample(*model, encode_conditioning(rec.spec), cfg);
      rec.real_latent = encode(traj);
      records[base_id + i] = std::move(rec);
    });
  }
  if (mix.include.count(Source::kPrVr)) {
    std::size_t base_id = records.size();
    records.resize(base_id + mix.count_prvr);
    parallel_for(mix.count_prvr, workers, [&](std::size_t i) {
      PromptSpec oracle_spec = real_corpus_spec(mix.seed, "data/prvr_world", i);
      VideoTrajectory traj = simulate(oracle_spec, derive_seed(mix.seed, "data/prvr_sim", i), world);
      DatasetRecord rec;
      rec.id = base_id + i;
      rec.source = Source::kPrVr;
      rec.spec = caption_from_trajectory(traj);
      rec.gen_seed = derive_seed(mix.seed, "data/prvr_sim", i);
      rec.latent = encode(traj);
      rec.real_latent = rec.latent;
      records[base_id + i] = std::move(rec);
    });
  }
  for (const DatasetRecord& rec : records) rec.validate();
  return records;
}

namespace {

std::string mix_to_header(const DataMixConfig& mix) {
  std::string out(kHeaderTag);
  out += " include=";
  bool first = true;
  for (Source s : mix.include) {
    if (!first) out += ",";
    out += source_name(s);
    first = false;
  }
  out += " counts=" + std::to_string(mix.count_psvs) + "," + std::to_string(mix.count_prvs) + "," +
         std::to_string(mix.count_prvr);
  out += " targets=";
  for (std::size_t i = 0; i < mix.target_dimensions.size(); ++i) {
    if (i) out += ",";
    out += dimension_name(mix.target_dimensions[i]);
  }
  out += " defect_rate=" + format_double_roundtrip(mix.defects.rate);
  out += " defect_kinds=";
  first = true;
  for (DefectKind k : mix.defects.kinds) {
    if (!first) out += ",";
    out += defect_name(k);
    first = false;
  }
  if (mix.defects.kinds.empty()) out += "none";
  out += " defect_magnitude=" + format_double_roundtrip(mix.defects.magnitude);
  out += " defect_seed=" + std::to_string(mix.defects.seed);
  out += " seed=" + std::to_string(mix.seed);
  out += " variants=" + std::to_string(mix.variants_per_base);
  return out;
}

DataMixConfig mix_from_header(const std::string& line) {
  if (line.rfind(kHeaderTag, 0) != 0) {
    throw std::invalid_argument("dataset: missing or unsupported header line");
  }
  DataMixConfig mix;
  mix.include.clear();
  mix.target_dimensions.clear();
  mix.defects.kinds.clear();
  std::istringstream in(line.substr(kHeaderTag.size()));
  std::string item;
  while (in >> item) {
    std::size_t eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("dataset: malformed header field '" + item + "'");
    std::string key = item.substr(0, eq);
    std::string value = item.substr(eq + 1);
    if (key == "include") {
      for (const std::string& s : split(value, ',')) mix.include.insert(source_from_name(s));
    } else if (key == "counts") {
      auto parts = split(value, ',');
      if (parts.size() != 3) throw std::invalid_argument("dataset: header counts must have 3 entries");
      mix.count_psvs = std::stoull(parts[0]);
      mix.count_prvs = std::stoull(parts[1]);
      mix.count_prvr = std::stoull(parts[2]);
    } else if (key == "targets") {
      for (const std::string& s : split(value, ',')) mix.target_dimensions.push_back(dimension_from_name(s));
    } else if (key == "defect_rate") {
      mix.defects.rate = parse_double_strict(value, "defect rate");
    } else if (key == "defect_kinds") {
      if (value != "none") {
        for (const std::string& s : split(value, ',')) mix.defects.kinds.insert(defect_from_name(s));
      }
    } else if (key == "defect_magnitude") {
      mix.defects.magnitude = parse_double_strict(value, "defect magnitude");
    } else if (key == "defect_seed") {
      mix.defects.seed = std::stoull(value);
    } else if (key == "seed") {
      mix.seed = std::stoull(value);
    } else if (key == "variants") {
      mix.variants_per_base = std::stoull(value);
    } else {
      throw std::invalid_argument("dataset: unknown header field '" + key + "'");
    }
  }
  return mix;
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const DataMixConfig& mix,
                   const std::vector<DatasetRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("dataset: cannot open " + path.string() + " for writing");
  out << mix_to_header(mix) << "\n";
  for (const DatasetRecord& rec : records) {
    rec.validate();
    out << "id=" << rec.id << "|source=" << source_name(rec.source) << "|spec=" << rec.spec.to_string()
        << "|gen_seed=" << rec.gen_seed << "|latent=" << join_floats(rec.latent);
    if (rec.real_latent.has_value()) out << "|real_latent=" << join_floats(*rec.real_latent);
    if (rec.reward.has_value()) {
      out << "|reward=" << format_double_roundtrip(rec.reward->value) << "," << (rec.reward->valid ? 1 : 0);
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("dataset: write failed for " + path.string());
}

DatasetFile read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset: cannot open " + path.string());
  DatasetFile file;
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("dataset: empty file " + path.string());
  file.mix = mix_from_header(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    DatasetRecord rec;
    bool have_latent = false;
    for (const std::string& field : split(line, '|')) {
      std::size_t eq = field.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("dataset: malformed record field");
      std::string key = field.substr(0, eq);
      std::string value = field.substr(eq + 1);
      if (key == "id") {
        rec.id = std::stoull(value);
      } else if (key == "source") {
        rec.source = source_from_name(value);
      } else if (key == "spec") {
        rec.spec = PromptSpec::from_string(value);
      } else if (key == "gen_seed") {
        rec.gen_seed = std::stoull(value);
      } else if (key == "latent") {
        rec.latent = parse_floats(value, "latent value");
        have_latent = true;
      } else if (key == "real_latent") {
        rec.real_latent = parse_floats(value, "real latent value");
      } else if (key == "reward") {
        auto parts = split(value, ',');
        if (parts.size() != 2) throw std::invalid_argument("dataset: malformed reward");
        RewardScore r;
        r.value = parse_double_strict(parts[0], "reward value");
        r.valid = parts[1] == "1";
        rec.reward = r;
      } else {
        throw std::invalid_argument("dataset: unknown record field '" + key + "'");
      }
    }
    if (!have_latent) throw std::invalid_argument("dataset: record without latent");
    rec.validate();
    file.records.push_back(std::move(rec));
  }
  return file;
}

}  // namespace flowforge
