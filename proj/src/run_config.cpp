// Copyright 2026 the flowforge authors
// SPDX-License-Identifier: Apache-2.0
#include "flowforge/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "flowforge/rng.hpp"

namespace flowforge {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = text.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(text.substr(pos));
      return out;
    }
    out.push_back(text.substr(pos, next - pos));
    pos = next + 1;
  }
}

double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  double v = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size()) {
    throw ConfigError(key, "expected a number, got '" + value + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  char* end = nullptr;
  std::uint64_t v = std::strtoull(value.c_str(), &end, 10);
  if (value.empty() || end != value.c_str() + value.size()) {
    throw ConfigError(key, "expected an unsigned integer, got '" + value + "'");
  }
  return v;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(parse_u64(key, value));
}

std::vector<Dimension> parse_dimensions(const std::string& key, const std::string& value) {
  std::vector<Dimension> out;
  if (value == "all") {
    out.assign(kAllDimensions.begin(), kAllDimensions.end());
    return out;
  }
  for (const std::string& item : split(value, ',')) {
    try {
      out.push_back(dimension_from_name(trim(item)));
    } catch (const std::exception& e) {
      throw ConfigError(key, e.what());
    }
  }
  return out;
}

}  // namespace

void RunConfig::apply_override(const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(assignment, "override must look like section.key=value");
  }
  std::string path = trim(assignment.substr(0, eq));
  std::string value = trim(assignment.substr(eq + 1));
  std::size_t dot = path.find('.');
  if (dot == std::string::npos) {
    throw ConfigError(path, "override must name section.key");
  }
  std::string section = path.substr(0, dot);
  std::string key = path.substr(dot + 1);

  auto fail_unknown = [&]() { throw ConfigError(path, "unknown configuration key"); };

  if (section == "run") {
    if (key == "seed") seed = parse_u64(path, value);
    else if (key == "workers") workers = parse_size(path, value);
    else fail_unknown();
  } else if (section == "world") {
    if (key == "frames") world.frames = parse_size(path, value);
    else if (key == "objects") world.objects = parse_size(path, value);
    else fail_unknown();
  } else if (section == "model") {
    if (key == "hidden") {
      model.hidden_dims.clear();
      for (const std::string& item : split(value, ',')) model.hidden_dims.push_back(parse_size(path, trim(item)));
    } else if (key == "time_embed_dim") {
      model.time_embed_dim = parse_size(path, value);
    } else if (key == "activation") {
      try {
        model.activation = activation_from_name(value);
      } catch (const std::exception& e) {
        throw ConfigError(path, e.what());
      }
    } else {
      fail_unknown();
    }
  } else if (section == "sampler") {
    if (key == "steps") sampler.steps = parse_size(path, value);
    else if (key == "scheme") {
      try {
        sampler.scheme = scheme_from_name(value);
      } catch (const std::exception& e) {
        throw ConfigError(path, e.what());
      }
    } else {
      fail_unknown();
    }
  } else if (section == "scorer") {
    if (key == "delta_max") scorer.delta_max = parse_double(path, value);
    else if (key == "a_min") scorer.a_min = parse_double(path, value);
    else if (key == "eps_cam") scorer.eps_cam = parse_double(path, value);
    else if (key == "softness") scorer.softness = parse_double(path, value);
    else fail_unknown();
  } else if (section == "loss") {
    if (key == "lambda_ps") loss.lambda_ps = parse_double(path, value);
    else if (key == "lambda_pr") loss.lambda_pr = parse_double(path, value);
    else if (key == "lambda_kl") loss.lambda_kl = parse_double(path, value);
    else if (key == "kl_mode") {
      if (value == "pointwise") loss.kl_mode = KlMode::kPointwise;
      else if (value == "gaussian_moment") loss.kl_mode = KlMode::kGaussianMoment;
      else throw ConfigError(path, "expected pointwise or gaussian_moment");
    } else {
      fail_unknown();
    }
  } else if (section == "train") {
    if (key == "strategy") {
      try {
        train.strategy = strategy_from_name(value);
      } catch (const std::exception& e) {
        throw ConfigError(path, e.what());
      }
    } else if (key == "batch_size") {
      train.batch_size = parse_size(path, value);
    } else if (key == "epochs") {
      train.epochs = parse_size(path, value);
    } else if (key == "learning_rate") {
      // "paper_lr" selects the documented paper-scale preset.
      train.learning_rate = value == "paper_lr" ? kPaperLearningRate : parse_double(path, value);
    } else if (key == "lr_final_fraction") {
      train.lr_final_fraction = parse_double(path, value);
    } else if (key == "optimizer") {
      if (value == "adam") train.optimizer = OptimizerKind::kAdam;
      else if (value == "sgd") train.optimizer = OptimizerKind::kSgd;
      else throw ConfigError(path, "expected adam or sgd");
    } else if (key == "online_sampler_steps") {
      train.online_sampler_steps = parse_size(path, value);
    } else {
      fail_unknown();
    }
  } else if (section == "eval") {
    if (key == "dimensions") eval.dimensions = parse_dimensions(path, value);
    else if (key == "prompts_per_dimension") eval.prompts_per_dimension = parse_size(path, value);
    else if (key == "samples_per_prompt") eval.samples_per_prompt = parse_size(path, value);
    else fail_unknown();
  } else if (section == "data") {
    if (key == "include") {
      mix.include.clear();
      for (const std::string& item : split(value, ',')) {
        try {
          mix.include.insert(source_from_name(trim(item)));
        } catch (const std::exception& e) {
          throw ConfigError(path, e.what());
        }
      }
    } else if (key == "count_psvs") {
      mix.count_psvs = parse_size(path, value);
    } else if (key == "count_prvs") {
      mix.count_prvs = parse_size(path, value);
    } else if (key == "count_prvr") {
      mix.count_prvr = parse_size(path, value);
    } else if (key == "targets") {
      mix.target_dimensions = parse_dimensions(path, value);
    } else if (key == "variants_per_base") {
      mix.variants_per_base = parse_size(path, value);
    } else {
      fail_unknown();
    }
  } else if (section == "pretrain") {
    if (key == "corpus") pretrain.corpus = parse_size(path, value);
    else if (key == "epochs") pretrain.epochs = parse_size(path, value);
    else if (key == "batch_size") pretrain.batch_size = parse_size(path, value);
    else if (key == "learning_rate") pretrain.learning_rate = parse_double(path, value);
    else if (key == "lr_final_fraction") pretrain.lr_final_fraction = parse_double(path, value);
    else if (key == "defect_rate") pretrain.defects.rate = parse_double(path, value);
    else if (key == "defect_magnitude") pretrain.defects.magnitude = parse_double(path, value);
    else if (key == "defect_kinds") {
      pretrain.defects.kinds.clear();
      if (value != "all") {
        for (const std::string& item : split(value, ',')) {
          try {
            pretrain.defects.kinds.insert(defect_from_name(trim(item)));
          } catch (const std::exception& e) {
            throw ConfigError(path, e.what());
          }
        }
      } else {
        pretrain.defects.kinds = kAllDefects;
      }
    } else {
      fail_unknown();
    }
  } else if (section == "ablate") {
    if (key == "groups") {
      groups.clear();
      for (const std::string& group : split(value, ';')) {
        std::size_t colon = group.find(':');
        if (colon == std::string::npos) throw ConfigError(path, "group must look like name:dim+dim");
        std::vector<Dimension> dims;
        for (const std::string& d : split(group.substr(colon + 1), '+')) {
          try {
            dims.push_back(dimension_from_name(trim(d)));
          } catch (const std::exception& e) {
            throw ConfigError(path, e.what());
          }
        }
        groups.emplace_back(trim(group.substr(0, colon)), std::move(dims));
      }
    } else {
      fail_unknown();
    }
  } else {
    throw ConfigError(path, "unknown configuration section");
  }
}

void RunConfig::finalize() {
  if (const char* env = std::getenv("FLOWFORGE_SEED")) {
    seed = parse_u64("run.seed", env);
  }
  if (workers == 0) throw ConfigError("run.workers", "must be >= 1");

  model.latent_dim = world.latent_dim();
  model.cond_dim = kCondDim;
  model.seed = derive_seed(seed, "cli/model_init", 0);
  mix.seed = derive_seed(seed, "cli/data", 0);
  mix.defects = DefectConfig{};  // fine-tuning data is never defected
  pretrain.defects.seed = derive_seed(seed, "cli/defects", 0);
  train.seed = derive_seed(seed, "cli/train", 0);
  train.workers = workers;
  eval.seed = derive_seed(seed, "cli/eval", 0);
  eval.sampler = sampler;
  eval.scorer = scorer;
  eval.workers = workers;

  try {
    model.validate();
  } catch (const std::exception& e) {
    throw ConfigError("model", e.what());
  }
  try {
    sampler.validate();
  } catch (const std::exception& e) {
    throw ConfigError("sampler", e.what());
  }
  try {
    scorer.validate();
  } catch (const std::exception& e) {
    throw ConfigError("scorer", e.what());
  }
  try {
    loss.validate();
  } catch (const std::exception& e) {
    throw ConfigError("loss", e.what());
  }
  try {
    train.validate();
  } catch (const std::exception& e) {
    throw ConfigError("train", e.what());
  }
  try {
    eval.validate();
  } catch (const std::exception& e) {
    throw ConfigError("eval", e.what());
  }
  try {
    mix.validate();
  } catch (const std::exception& e) {
    throw ConfigError("data", e.what());
  }
  try {
    pretrain.defects.validate();
  } catch (const std::exception& e) {
    throw ConfigError("pretrain", e.what());
  }
  if (world.frames < 6 || world.frames > 256 || world.objects == 0 || world.objects > 8) {
    throw ConfigError("world", "frames must be in [6,256] and objects in [1,8]");
  }
  if (pretrain.corpus == 0 || pretrain.epochs == 0) {
    throw ConfigError("pretrain", "corpus and epochs must be positive");
  }
  for (const auto& [name, dims] : groups) {
    if (name.empty() || dims.empty()) throw ConfigError("ablate.groups", "groups need a name and dimensions");
  }
}

std::string RunConfig::serialize() const {
  std::ostringstream out;
  out << "schema_version 1\n\n";
  out << "[run]\n";
  out << "seed = " << seed << "\n";
  out << "workers = " << workers << "\n\n";
  out << "[world]\n";
  out << "frames = " << world.frames << "\n";
  out << "objects = " << world.objects << "\n\n";
  out << "[model]\n";
  out << "hidden = ";
  for (std::size_t i = 0; i < model.hidden_dims.size(); ++i) {
    if (i) out << ",";
    out << model.hidden_dims[i];
  }
  out << "\n";
  out << "time_embed_dim = " << model.time_embed_dim << "\n";
  out << "activation = " << activation_name(model.activation) << "\n\n";
  out << "[sampler]\n";
  out << "steps = " << sampler.steps << "\n";
  out << "scheme = " << scheme_name(sampler.scheme) << "\n\n";
  out << "[scorer]\n";
  out << "delta_max = " << format_double_roundtrip(scorer.delta_max) << "\n";
  out << "a_min = " << format_double_roundtrip(scorer.a_min) << "\n";
  out << "eps_cam = " << format_double_roundtrip(scorer.eps_cam) << "\n";
  out << "softness = " << format_double_roundtrip(scorer.softness) << "\n\n";
  out << "[loss]\n";
  out << "lambda_ps = " << format_double_roundtrip(loss.lambda_ps) << "\n";
  out << "lambda_pr = " << format_double_roundtrip(loss.lambda_pr) << "\n";
  out << "lambda_kl = " << format_double_roundtrip(loss.lambda_kl) << "\n";
  out << "kl_mode = " << (loss.kl_mode == KlMode::kPointwise ? "pointwise" : "gaussian_moment") << "\n\n";
  out << "[train]\n";
  out << "strategy = " << strategy_name(train.strategy) << "\n";
  out << "batch_size = " << train.batch_size << "\n";
  out << "epochs = " << train.epochs << "\n";
  out << "learning_rate = " << format_double_roundtrip(train.learning_rate) << "\n";
  out << "lr_final_fraction = " << format_double_roundtrip(train.lr_final_fraction) << "\n";
  out << "optimizer = " << (train.optimizer == OptimizerKind::kAdam ? "adam" : "sgd") << "\n";
  out << "online_sampler_steps = " << train.online_sampler_steps << "\n\n";
  out << "[eval]\n";
  out << "dimensions = ";
  for (std::size_t i = 0; i < eval.dimensions.size(); ++i) {
    if (i) out << ",";
    out << dimension_name(eval.dimensions[i]);
  }
  out << "\n";
  out << "prompts_per_dimension = " << eval.prompts_per_dimension << "\n";
  out << "samples_per_prompt = " << eval.samples_per_prompt << "\n\n";
  out << "[data]\n";
  out << "include = ";
  bool first = true;
  for (Source s : mix.include) {
    if (!first) out << ",";
    out << source_name(s);
    first = false;
  }
  out << "\n";
  out << "count_psvs = " << mix.count_psvs << "\n";
  out << "count_prvs = " << mix.count_prvs << "\n";
  out << "count_prvr = " << mix.count_prvr << "\n";
  out << "targets = ";
  for (std::size_t i = 0; i < mix.target_dimensions.size(); ++i) {
    if (i) out << ",";
    out << dimension_name(mix.target_dimensions[i]);
  }
  out << "\n";
  out << "variants_per_base = " << mix.variants_per_base << "\n\n";
  out << "[pretrain]\n";
  out << "corpus = " << pretrain.corpus << "\n";
  out << "epochs = " << pretrain.epochs << "\n";
  out << "batch_size = " << pretrain.batch_size << "\n";
  out << "learning_rate = " << format_double_roundtrip(pretrain.learning_rate) << "\n";
  out << "lr_final_fraction = " << format_double_roundtrip(pretrain.lr_final_fraction) << "\n";
  out << "defect_rate = " << format_double_roundtrip(pretrain.defects.rate) << "\n";
  out << "defect_magnitude = " << format_double_roundtrip(pretrain.defects.magnitude) << "\n";
  out << "defect_kinds = ";
  if (pretrain.defects.kinds == kAllDefects) {
    out << "all";
  } else {
    first = true;
    for (DefectKind k : pretrain.defects.kinds) {
      if (!first) out << ",";
      out << defect_name(k);
      first = false;
    }
  }
  out << "\n\n";
  out << "[ablate]\n";
  out << "groups = ";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (g) out << ";";
    out << groups[g].first << ":";
    for (std::size_t d = 0; d < groups[g].second.size(); ++d) {
      if (d) out << "+";
      out << dimension_name(groups[g].second[d]);
    }
  }
  out << "\n";
  return out.str();
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  bool saw_version = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (!saw_version) {
      if (t != "schema_version 1") {
        throw ConfigError("schema_version", "config must start with 'schema_version 1'");
      }
      saw_version = true;
      continue;
    }
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("line " + std::to_string(line_no), "malformed section header");
      section = t.substr(1, t.size() - 2);
      const char* known[] = {"run", "world", "model", "sampler", "scorer", "loss", "train", "eval", "data",
                             "pretrain", "ablate"};
      bool ok = false;
      for (const char* name : known) ok = ok || section == name;
      if (!ok) throw ConfigError(section, "unknown configuration section");
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (section.empty()) throw ConfigError(key, "key outside any [section]");
    cfg.apply_override(section + "." + key + "=" + value);
  }
  if (!saw_version) throw ConfigError("schema_version", "config must start with 'schema_version 1'");
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("config file not found: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text);
}

}  // namespace flowforge
