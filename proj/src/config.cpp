#include "o2o/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "o2o/errors.hpp"

namespace o2o {

AlgorithmSpec algorithm_spec(const std::string& id) {
  AlgorithmSpec s;
  s.id = id;
  if (id == "cql") {
    s.offline = s.online = CriticObjective::kCql;
  } else if (id == "cql_sac") {
    s.offline = CriticObjective::kCql;
    s.online = CriticObjective::kTd;
  } else if (id == "calql") {
    s.offline = s.online = CriticObjective::kCalql;
  } else if (id == "calql_sac") {
    s.offline = CriticObjective::kCalql;
    s.online = CriticObjective::kTd;
  } else if (id == "rankq") {
    s.offline = s.online = CriticObjective::kRankq;
  } else if (id == "rankq_sac") {
    s.offline = CriticObjective::kRankq;
    s.online = CriticObjective::kTd;
  } else if (id == "sac_off") {
    s.offline = s.online = CriticObjective::kTd;
    s.pooled_buffer = true;
  } else if (id == "sac") {
    s.offline = s.online = CriticObjective::kTd;
    s.uses_offline_data = false;
  } else if (id == "hybrid") {
    s.offline = s.online = CriticObjective::kTd;
    s.fixed_half_mix = true;
  } else {
    throw ConfigError("unknown algorithm '" + id +
                      "' (expected cql, cql_sac, calql, calql_sac, sac_off, "
                      "sac, hybrid, rankq, rankq_sac)");
  }
  return s;
}

CriticObjectiveConfig TrainConfig::objective(CriticObjective kind) const {
  CriticObjectiveConfig cfg;
  cfg.kind = kind;
  cfg.gamma = gamma;
  cfg.alpha = alpha;
  cfg.use_lagrange = use_lagrange;
  cfg.target_action_gap = target_action_gap;
  cfg.n_policy_actions = n_policy_actions;
  cfg.n_random_actions = n_random_actions;
  cfg.n_target_action_samples = target_action_samples;
  if (target_value_floor) cfg.target_value_floor = 0.0;
  cfg.estimator = cql_estimator == "mean-policy" ? CqlEstimator::kMeanPolicy
                                                 : CqlEstimator::kLogSumExp;
  cfg.alpha0 = alpha0;
  cfg.alpha1 = alpha1;
  cfg.sigma = sigma;
  cfg.ablate_double_sigma = ablate_double_sigma;
  cfg.ablate_no_permuted = ablate_no_permuted;
  cfg.ablate_no_chain = ablate_no_chain;
  cfg.fail_pair = fail_pair == "noisy" ? FailPair::kNoisy : FailPair::kRandom;
  return cfg;
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  auto complain = [&](const std::string& p) { problems.push_back(p); };

  AlgorithmSpec spec;
  try {
    spec = algorithm_spec(algorithm);
  } catch (const ConfigError& e) {
    complain(e.what());
    spec.id = "";
  }
  if (!spec.id.empty()) {
    if (spec.uses_offline_data && dataset.empty())
      complain("algorithm '" + algorithm + "' needs a dataset file");
    if (!spec.uses_offline_data && offline_steps != 0)
      complain("algorithm 'sac' is pure-online; set offline_steps = 0");
  }
  if (batch_size == 0) complain("batch_size must be > 0");
  if (updates_per_env_step == 0) complain("updates_per_env_step must be > 0");
  if (grad_clip <= 0.0) complain("grad_clip must be > 0");
  if (actor_lr <= 0.0) complain("actor_lr must be > 0");
  if (critic_lr <= 0.0) complain("critic_lr must be > 0");
  if (temp_lr <= 0.0) complain("temp_lr must be > 0");
  if (!(mixing_ratio == -1.0 || (mixing_ratio >= 0.0 && mixing_ratio <= 1.0)))
    complain("mixing_ratio must be in [0, 1] or -1");
  if (replay_capacity == 0) complain("replay_capacity must be > 0");
  if (gamma < 0.0 || gamma > 1.0) complain("gamma must be in [0, 1]");
  if (tau <= 0.0 || tau > 1.0) complain("tau must be in (0, 1]");
  if (eval_every == 0) complain("eval_every must be > 0");
  if (eval_episodes == 0) complain("eval_episodes must be > 0");
  if (eval_workers == 0) complain("eval_workers must be > 0");
  if (actor_hidden.empty()) complain("actor_hidden must name at least one layer");
  if (critic_hidden.empty()) complain("critic_hidden must name at least one layer");
  if (cql_estimator != "logsumexp" && cql_estimator != "mean-policy")
    complain("cql_estimator must be logsumexp or mean-policy");
  if (fail_pair != "random" && fail_pair != "noisy")
    complain("fail_pair must be random or noisy");
  if (!spec.id.empty()) {
    try {
      objective(spec.offline).validate(true);
      objective(spec.online).validate(true);
    } catch (const ConfigError& e) {
      complain(e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
}

namespace {

struct KeyDef {
  const char* name;
  const char* preset;
  const char* help;
  std::function<void(TrainConfig&, const std::string&)> set;
};

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + v + "' is not a number");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::vector<std::size_t> parse_widths(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(static_cast<std::size_t>(parse_u64(key, item)));
  }
  if (out.empty()) throw ConfigError(key + ": '" + v + "' lists no layer widths");
  return out;
}

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      {"algorithm", "rankq",
       "one of cql, cql_sac, calql, calql_sac, sac_off, sac, hybrid, rankq, rankq_sac",
       [](TrainConfig& c, const std::string& v) { c.algorithm = v; }},
      {"env", "maze-medium", "maze-medium, maze-large, or a grid file path",
       [](TrainConfig& c, const std::string& v) { c.env = v; }},
      {"dataset", "", "offline .o2o dataset path",
       [](TrainConfig& c, const std::string& v) { c.dataset = v; }},
      {"offline_steps", "20000", "offline gradient steps",
       [](TrainConfig& c, const std::string& v) { c.offline_steps = parse_u64("offline_steps", v); }},
      {"online_env_steps", "50000", "online environment steps",
       [](TrainConfig& c, const std::string& v) { c.online_env_steps = parse_u64("online_env_steps", v); }},
      {"updates_per_env_step", "1", "gradient updates per environment step",
       [](TrainConfig& c, const std::string& v) { c.updates_per_env_step = parse_u64("updates_per_env_step", v); }},
      {"batch_size", "256", "mini-batch size",
       [](TrainConfig& c, const std::string& v) { c.batch_size = parse_u64("batch_size", v); }},
      {"actor_lr", "1e-4", "actor learning rate",
       [](TrainConfig& c, const std::string& v) { c.actor_lr = parse_double("actor_lr", v); }},
      {"critic_lr", "3e-4", "critic learning rate",
       [](TrainConfig& c, const std::string& v) { c.critic_lr = parse_double("critic_lr", v); }},
      {"temp_lr", "3e-4", "entropy temperature learning rate",
       [](TrainConfig& c, const std::string& v) { c.temp_lr = parse_double("temp_lr", v); }},
      {"grad_clip", "1.0", "global gradient norm clip",
       [](TrainConfig& c, const std::string& v) { c.grad_clip = parse_double("grad_clip", v); }},
      {"mixing_ratio", "0.5", "offline fraction per batch, or -1 for a pooled buffer",
       [](TrainConfig& c, const std::string& v) { c.mixing_ratio = parse_double("mixing_ratio", v); }},
      {"replay_capacity", "1000000", "online replay buffer length",
       [](TrainConfig& c, const std::string& v) { c.replay_capacity = parse_u64("replay_capacity", v); }},
      {"gamma", "0.99", "discount factor",
       [](TrainConfig& c, const std::string& v) { c.gamma = parse_double("gamma", v); }},
      {"tau", "0.005", "Polyak rate for target critics",
       [](TrainConfig& c, const std::string& v) { c.tau = parse_double("tau", v); }},
      {"eval_every", "5000", "steps between evaluations (and checkpoints)",
       [](TrainConfig& c, const std::string& v) { c.eval_every = parse_u64("eval_every", v); }},
      {"eval_episodes", "20", "episodes per evaluation",
       [](TrainConfig& c, const std::string& v) { c.eval_episodes = parse_u64("eval_episodes", v); }},
      {"eval_workers", "1", "threads for evaluation episodes",
       [](TrainConfig& c, const std::string& v) { c.eval_workers = parse_u64("eval_workers", v); }},
      {"seed", "0", "master seed; all randomness derives from it",
       [](TrainConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }},
      {"actor_hidden", "256,256,256", "actor hidden widths",
       [](TrainConfig& c, const std::string& v) { c.actor_hidden = parse_widths("actor_hidden", v); }},
      {"critic_hidden", "256,256,256", "critic hidden widths",
       [](TrainConfig& c, const std::string& v) { c.critic_hidden = parse_widths("critic_hidden", v); }},
      {"auto_entropy", "true", "auto-tune the entropy temperature",
       [](TrainConfig& c, const std::string& v) { c.auto_entropy = parse_bool("auto_entropy", v); }},
      {"target_entropy", "0", "entropy target; 0 means -action_dim",
       [](TrainConfig& c, const std::string& v) { c.target_entropy = parse_double("target_entropy", v); }},
      {"probe_size", "512", "transitions in the dQ/da probe batch",
       [](TrainConfig& c, const std::string& v) { c.probe_size = parse_u64("probe_size", v); }},
      {"target_action_samples", "1", "policy samples averaged in the bootstrap target",
       [](TrainConfig& c, const std::string& v) { c.target_action_samples = parse_u64("target_action_samples", v); }},
      {"target_value_floor", "false", "floor the bootstrap at 0 (sparse {0,1} rewards)",
       [](TrainConfig& c, const std::string& v) { c.target_value_floor = parse_bool("target_value_floor", v); }},
      {"alpha", "1.0", "CQL / Cal-QL regularizer weight",
       [](TrainConfig& c, const std::string& v) { c.alpha = parse_double("alpha", v); }},
      {"use_lagrange", "false", "tune alpha against target_action_gap",
       [](TrainConfig& c, const std::string& v) { c.use_lagrange = parse_bool("use_lagrange", v); }},
      {"target_action_gap", "0.8", "Lagrange target action gap",
       [](TrainConfig& c, const std::string& v) { c.target_action_gap = parse_double("target_action_gap", v); }},
      {"n_policy_actions", "10", "policy samples in the CQL estimator",
       [](TrainConfig& c, const std::string& v) { c.n_policy_actions = parse_u64("n_policy_actions", v); }},
      {"n_random_actions", "10", "uniform samples in the CQL estimator",
       [](TrainConfig& c, const std::string& v) { c.n_random_actions = parse_u64("n_random_actions", v); }},
      {"cql_estimator", "logsumexp", "logsumexp (density-corrected) or mean-policy",
       [](TrainConfig& c, const std::string& v) { c.cql_estimator = v; }},
      {"alpha0", "1.0", "RankQ success/chain weight",
       [](TrainConfig& c, const std::string& v) { c.alpha0 = parse_double("alpha0", v); }},
      {"alpha1", "1.0", "RankQ failure weight",
       [](TrainConfig& c, const std::string& v) { c.alpha1 = parse_double("alpha1", v); }},
      {"sigma", "0.15", "noisy-action perturbation scale",
       [](TrainConfig& c, const std::string& v) { c.sigma = parse_double("sigma", v); }},
      {"ablate_double_sigma", "false", "ablation: double sigma",
       [](TrainConfig& c, const std::string& v) { c.ablate_double_sigma = parse_bool("ablate_double_sigma", v); }},
      {"ablate_no_permuted", "false", "ablation: drop the permuted-action pair",
       [](TrainConfig& c, const std::string& v) { c.ablate_no_permuted = parse_bool("ablate_no_permuted", v); }},
      {"ablate_no_chain", "false", "ablation: drop the chain terms",
       [](TrainConfig& c, const std::string& v) { c.ablate_no_chain = parse_bool("ablate_no_chain", v); }},
      {"fail_pair", "random", "failure-row comparator: random (equations) or noisy (pseudocode)",
       [](TrainConfig& c, const std::string& v) { c.fail_pair = v; }},
  };
  return defs;
}

void apply_kv(TrainConfig& cfg, const std::string& key, const std::string& value,
              std::vector<std::string>& problems) {
  for (const auto& def : key_defs()) {
    if (key == def.name) {
      try {
        def.set(cfg, value);
      } catch (const ConfigError& e) {
        problems.push_back(e.what());
      }
      return;
    }
  }
  problems.push_back("unknown config key '" + key + "'");
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

TrainConfig parse_train_config(const std::vector<std::string>& lines,
                               const std::vector<std::string>& overrides) {
  TrainConfig cfg;
  std::vector<std::string> problems;
  auto handle = [&](const std::string& raw, const std::string& where) {
    std::string line = raw;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) return;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back(where + ": expected key = value, got '" + line + "'");
      return;
    }
    apply_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), problems);
  };
  for (std::size_t i = 0; i < lines.size(); ++i)
    handle(lines[i], "line " + std::to_string(i + 1));
  for (const auto& ov : overrides) handle(ov, "override");
  if (!problems.empty()) {
    std::string msg = "config parse failed:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw ConfigError(msg);
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path,
                              const std::vector<std::string>& overrides) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) lines.push_back(line);
  return parse_train_config(lines, overrides);
}

std::string config_key_help() {
  std::string out;
  for (const auto& def : key_defs()) {
    out += "  ";
    out += def.name;
    std::size_t pad = std::max<std::size_t>(1, 22 - std::string(def.name).size());
    out.append(pad, ' ');
    out += "[";
    out += def.preset;
    out += "] ";
    out += def.help;
    out += "\n";
  }
  return out;
}

}  // namespace o2o
