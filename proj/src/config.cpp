#include "setpool/config.hpp"

#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "setpool/errors.hpp"

namespace setpool {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad numeric value '" + value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("config key '" + key + "': bad integer value '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + value + "'");
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_u64(key, item));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values,
                 const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += f(values[i]);
  }
  return out;
}

}  // namespace

std::string to_string(TrainMode mode) {
  return mode == TrainMode::kOnPolicy ? "onpolicy" : "offpolicy";
}
std::string to_string(TerminationMode mode) {
  return mode == TerminationMode::kFullTraversal ? "full_traversal" : "softmax";
}
std::string to_string(PgrMode mode) {
  switch (mode) {
    case PgrMode::kNone: return "none";
    case PgrMode::kParameterFree: return "pf";
    case PgrMode::kMetricLearning: return "ml";
  }
  return "none";
}
std::string to_string(Protocol protocol) {
  switch (protocol) {
    case Protocol::kVerify: return "verify";
    case Protocol::kClosedId: return "closed-id";
    case Protocol::kOpenId: return "open-id";
  }
  return "verify";
}
std::string to_string(Baseline baseline) {
  switch (baseline) {
    case Baseline::kMeanPool: return "meanpool";
    case Baseline::kMaxPool: return "maxpool";
    case Baseline::kDac: return "dac";
    case Baseline::kDacBinary: return "dac-binary";
  }
  return "dac";
}

Protocol protocol_from_string(const std::string& s) {
  if (s == "verify") return Protocol::kVerify;
  if (s == "closed-id") return Protocol::kClosedId;
  if (s == "open-id") return Protocol::kOpenId;
  throw ConfigError("unknown protocol '" + s + "'");
}

Baseline baseline_from_string(const std::string& s) {
  if (s == "meanpool") return Baseline::kMeanPool;
  if (s == "maxpool") return Baseline::kMaxPool;
  if (s == "dac") return Baseline::kDac;
  if (s == "dac-binary") return Baseline::kDacBinary;
  throw ConfigError("unknown baseline '" + s + "'");
}

PgrMode pgr_mode_from_string(const std::string& s) {
  if (s == "none") return PgrMode::kNone;
  if (s == "pf") return PgrMode::kParameterFree;
  if (s == "ml") return PgrMode::kMetricLearning;
  throw ConfigError("unknown pgr mode '" + s + "'");
}

ExperimentConfig parse_config(const std::string& text) {
  // collect key/value lines first so duplicates and unknowns are all caught
  std::map<std::string, std::string> kv;
  std::stringstream stream(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::size_t first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const std::size_t last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const std::size_t sep = line.find_first_of(" \t");
    if (sep == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key value'");
    const std::string key = line.substr(0, sep);
    const std::size_t vstart = line.find_first_not_of(" \t", sep);
    const std::string value = line.substr(vstart);
    if (!kv.emplace(key, value).second)
      throw ConfigError("config: duplicate key '" + key + "'");
  }

  if (!kv.count("version")) throw ConfigError("config: missing required 'version' key");

  ExperimentConfig cfg;
  std::map<std::string, std::function<void(const std::string&, const std::string&)>> handlers;
  auto on = [&](const char* key, auto setter) {
    handlers[key] = [setter](const std::string& k, const std::string& v) { setter(k, v); };
  };

  on("version", [&](const std::string& k, const std::string& v) {
    cfg.version = static_cast<std::uint32_t>(parse_u64(k, v));
    if (cfg.version != 1)
      throw ConfigError("config: unsupported version " + std::to_string(cfg.version));
  });
  on("seed", [&](const std::string& k, const std::string& v) { cfg.seed = parse_u64(k, v); });
  on("dataset.path", [&](const std::string&, const std::string& v) { cfg.dataset_path = v; });
  on("dataset.num_identities", [&](const std::string& k, const std::string& v) {
    cfg.dataset.num_identities = static_cast<std::uint32_t>(parse_u64(k, v));
  });
  on("dataset.embed_dim", [&](const std::string& k, const std::string& v) {
    cfg.dataset.embed_dim = static_cast<std::uint32_t>(parse_u64(k, v));
  });
  on("dataset.sets_per_identity", [&](const std::string& k, const std::string& v) {
    cfg.dataset.sets_per_identity = static_cast<std::uint32_t>(parse_u64(k, v));
  });
  on("dataset.set_size_min", [&](const std::string& k, const std::string& v) {
    cfg.dataset.set_size_min = static_cast<std::uint32_t>(parse_u64(k, v));
  });
  on("dataset.set_size_max", [&](const std::string& k, const std::string& v) {
    cfg.dataset.set_size_max = static_cast<std::uint32_t>(parse_u64(k, v));
  });
  on("dataset.pose_offset_scale", [&](const std::string& k, const std::string& v) {
    cfg.dataset.pose_offset_scale = parse_double(k, v);
  });
  on("dataset.quality_sigma_min", [&](const std::string& k, const std::string& v) {
    cfg.dataset.quality_sigma_min = parse_double(k, v);
  });
  on("dataset.quality_sigma_max", [&](const std::string& k, const std::string& v) {
    cfg.dataset.quality_sigma_max = parse_double(k, v);
  });
  on("dataset.redundancy_rate", [&](const std::string& k, const std::string& v) {
    cfg.dataset.redundancy_rate = parse_double(k, v);
  });
  on("dataset.video_fraction", [&](const std::string& k, const std::string& v) {
    cfg.dataset.video_fraction = parse_double(k, v);
  });
  on("agent.gamma",
     [&](const std::string& k, const std::string& v) { cfg.gamma = parse_double(k, v); });
  on("agent.lambda",
     [&](const std::string& k, const std::string& v) { cfg.lambda = parse_double(k, v); });
  on("agent.lr_min",
     [&](const std::string& k, const std::string& v) { cfg.lr_min = parse_double(k, v); });
  on("agent.lr_max",
     [&](const std::string& k, const std::string& v) { cfg.lr_max = parse_double(k, v); });
  on("agent.value_lr_scale", [&](const std::string& k, const std::string& v) {
    cfg.value_lr_scale = parse_double(k, v);
  });
  on("train.mode", [&](const std::string&, const std::string& v) {
    if (v == "onpolicy") {
      cfg.train_mode = TrainMode::kOnPolicy;
    } else if (v == "offpolicy") {
      cfg.train_mode = TrainMode::kOffPolicy;
    } else {
      throw ConfigError("train.mode must be onpolicy or offpolicy, got '" + v + "'");
    }
  });
  on("train.episodes",
     [&](const std::string& k, const std::string& v) { cfg.episodes = parse_u64(k, v); });
  on("train.head_lr",
     [&](const std::string& k, const std::string& v) { cfg.head_lr = parse_double(k, v); });
  on("train.head_warmup_lr", [&](const std::string& k, const std::string& v) {
    cfg.head_warmup_lr = parse_double(k, v);
  });
  on("train.head_warmup",
     [&](const std::string& k, const std::string& v) { cfg.head_warmup = parse_u64(k, v); });
  on("offpolicy.xi",
     [&](const std::string& k, const std::string& v) { cfg.trust.xi = parse_double(k, v); });
  on("offpolicy.alpha",
     [&](const std::string& k, const std::string& v) { cfg.trust.alpha = parse_double(k, v); });
  on("offpolicy.c",
     [&](const std::string& k, const std::string& v) { cfg.trust.c = parse_double(k, v); });
  on("offpolicy.pool_capacity",
     [&](const std::string& k, const std::string& v) { cfg.pool_capacity = parse_u64(k, v); });
  on("offpolicy.batch_size",
     [&](const std::string& k, const std::string& v) { cfg.batch_size = parse_u64(k, v); });
  on("offpolicy.replay_min",
     [&](const std::string& k, const std::string& v) { cfg.replay_min = parse_u64(k, v); });
  on("termination.mode", [&](const std::string&, const std::string& v) {
    if (v == "full_traversal") {
      cfg.termination = TerminationMode::kFullTraversal;
    } else if (v == "softmax") {
      cfg.termination = TerminationMode::kSoftmax;
    } else {
      throw ConfigError("termination.mode must be full_traversal or softmax, got '" + v + "'");
    }
  });
  on("termination.threshold", [&](const std::string& k, const std::string& v) {
    cfg.termination_threshold = parse_double(k, v);
  });
  on("pgr.mode",
     [&](const std::string&, const std::string& v) { cfg.pgr = pgr_mode_from_string(v); });
  on("pgr.beta", [&](const std::string& k, const std::string& v) {
    cfg.pgr_thresholds.beta = parse_double(k, v);
  });
  on("pgr.phi", [&](const std::string& k, const std::string& v) {
    cfg.pgr_thresholds.phi = parse_double(k, v);
  });
  on("pgr.train_steps",
     [&](const std::string& k, const std::string& v) { cfg.pgr_train_steps = parse_u64(k, v); });
  on("pgr.lr",
     [&](const std::string& k, const std::string& v) { cfg.pgr_lr = parse_double(k, v); });
  on("temporal.enabled", [&](const std::string& k, const std::string& v) {
    cfg.temporal_enabled = parse_bool(k, v);
  });
  on("temporal.train_steps", [&](const std::string& k, const std::string& v) {
    cfg.temporal_train_steps = parse_u64(k, v);
  });
  on("temporal.lr",
     [&](const std::string& k, const std::string& v) { cfg.temporal_lr = parse_double(k, v); });
  on("eval.protocol",
     [&](const std::string&, const std::string& v) { cfg.protocol = protocol_from_string(v); });
  on("eval.far_grid", [&](const std::string& k, const std::string& v) {
    cfg.grid.far = parse_double_list(k, v);
  });
  on("eval.fpir_grid", [&](const std::string& k, const std::string& v) {
    cfg.grid.fpir = parse_double_list(k, v);
  });
  on("eval.rank_grid", [&](const std::string& k, const std::string& v) {
    cfg.grid.ranks = parse_size_list(k, v);
  });
  on("eval.open_impostor_fraction", [&](const std::string& k, const std::string& v) {
    cfg.grid.open_impostor_fraction = parse_double(k, v);
  });

  for (const auto& [key, value] : kv) {
    const auto it = handlers.find(key);
    if (it == handlers.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(key, value);
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  auto emit = [&](const std::string& key, const std::string& value) {
    out += key;
    out += ' ';
    out += value;
    out += '\n';
  };
  emit("version", std::to_string(cfg.version));
  emit("seed", std::to_string(cfg.seed));
  if (!cfg.dataset_path.empty()) emit("dataset.path", cfg.dataset_path);
  emit("dataset.num_identities", std::to_string(cfg.dataset.num_identities));
  emit("dataset.embed_dim", std::to_string(cfg.dataset.embed_dim));
  emit("dataset.sets_per_identity", std::to_string(cfg.dataset.sets_per_identity));
  emit("dataset.set_size_min", std::to_string(cfg.dataset.set_size_min));
  emit("dataset.set_size_max", std::to_string(cfg.dataset.set_size_max));
  emit("dataset.pose_offset_scale", format_double(cfg.dataset.pose_offset_scale));
  emit("dataset.quality_sigma_min", format_double(cfg.dataset.quality_sigma_min));
  emit("dataset.quality_sigma_max", format_double(cfg.dataset.quality_sigma_max));
  emit("dataset.redundancy_rate", format_double(cfg.dataset.redundancy_rate));
  emit("dataset.video_fraction", format_double(cfg.dataset.video_fraction));
  emit("agent.gamma", format_double(cfg.gamma));
  emit("agent.lambda", format_double(cfg.lambda));
  emit("agent.lr_min", format_double(cfg.lr_min));
  emit("agent.lr_max", format_double(cfg.lr_max));
  emit("agent.value_lr_scale", format_double(cfg.value_lr_scale));
  emit("train.mode", to_string(cfg.train_mode));
  emit("train.episodes", std::to_string(cfg.episodes));
  emit("train.head_lr", format_double(cfg.head_lr));
  emit("train.head_warmup_lr", format_double(cfg.head_warmup_lr));
  emit("train.head_warmup", std::to_string(cfg.head_warmup));
  emit("offpolicy.xi", format_double(cfg.trust.xi));
  emit("offpolicy.alpha", format_double(cfg.trust.alpha));
  emit("offpolicy.c", format_double(cfg.trust.c));
  emit("offpolicy.pool_capacity", std::to_string(cfg.pool_capacity));
  emit("offpolicy.batch_size", std::to_string(cfg.batch_size));
  emit("offpolicy.replay_min", std::to_string(cfg.replay_min));
  emit("termination.mode", to_string(cfg.termination));
  emit("termination.threshold", format_double(cfg.termination_threshold));
  emit("pgr.mode", to_string(cfg.pgr));
  emit("pgr.beta", format_double(cfg.pgr_thresholds.beta));
  emit("pgr.phi", format_double(cfg.pgr_thresholds.phi));
  emit("pgr.train_steps", std::to_string(cfg.pgr_train_steps));
  emit("pgr.lr", format_double(cfg.pgr_lr));
  emit("temporal.enabled", cfg.temporal_enabled ? "true" : "false");
  emit("temporal.train_steps", std::to_string(cfg.temporal_train_steps));
  emit("temporal.lr", format_double(cfg.temporal_lr));
  emit("eval.protocol", to_string(cfg.protocol));
  emit("eval.far_grid", join<double>(cfg.grid.far, format_double));
  emit("eval.fpir_grid", join<double>(cfg.grid.fpir, format_double));
  emit("eval.rank_grid", join<std::size_t>(cfg.grid.ranks, [](const std::size_t& v) {
    return std::to_string(v);
  }));
  emit("eval.open_impostor_fraction", format_double(cfg.grid.open_impostor_fraction));
  return out;
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.lambda < 0.0) throw ConfigError("agent.lambda must be nonnegative");
  if (cfg.gamma < 0.0 || cfg.gamma >= 1.0) throw ConfigError("agent.gamma must lie in [0, 1)");
  if (cfg.lr_min <= 0.0 || cfg.lr_max < cfg.lr_min)
    throw ConfigError("learning-rate range requires 0 < lr_min <= lr_max");
  if (cfg.value_lr_scale <= 0.0)
    throw ConfigError("agent.value_lr_scale must be positive");
  if (cfg.termination_threshold <= 0.0 || cfg.termination_threshold > 1.0)
    throw ConfigError("termination.threshold must lie in (0, 1]");
  if (cfg.termination == TerminationMode::kSoftmax && cfg.protocol == Protocol::kOpenId)
    throw ConfigError("softmax termination cannot be combined with open-id evaluation");
  if (cfg.trust.xi <= 0.0 || cfg.trust.c <= 0.0)
    throw ConfigError("offpolicy.xi and offpolicy.c must be positive");
  if (cfg.trust.alpha < 0.0 || cfg.trust.alpha > 1.0)
    throw ConfigError("offpolicy.alpha must lie in [0, 1]");
  if (cfg.pool_capacity == 0 || cfg.batch_size == 0)
    throw ConfigError("offpolicy pool settings must be positive");
  if (cfg.pgr_thresholds.beta <= 0.0 || cfg.pgr_thresholds.phi <= 0.0)
    throw ConfigError("pgr.beta and pgr.phi must be positive");
  if (cfg.grid.open_impostor_fraction <= 0.0 || cfg.grid.open_impostor_fraction >= 1.0)
    throw ConfigError("eval.open_impostor_fraction must lie in (0, 1)");
  for (double far : cfg.grid.far)
    if (far <= 0.0 || far >= 1.0) throw ConfigError("eval.far_grid entries must lie in (0,1)");
  for (double fpir : cfg.grid.fpir)
    if (fpir <= 0.0 || fpir >= 1.0)
      throw ConfigError("eval.fpir_grid entries must lie in (0,1)");
  if (cfg.dataset_path.empty()) validate(cfg.dataset);
}

}  // namespace setpool
