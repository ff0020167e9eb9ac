#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "o2o/critics.hpp"

namespace o2o {

// Offline/online objective pair for one algorithm id. The "+SAC" variants
// drop their conservative or ranking terms at the offline-to-online boundary.
struct AlgorithmSpec {
  std::string id;
  CriticObjective offline = CriticObjective::kTd;
  CriticObjective online = CriticObjective::kTd;
  bool uses_offline_data = true;
  bool pooled_buffer = false;  // sac_off style soft start
  bool fixed_half_mix = false; // hybrid: 50/50 separate stores, always
};

// Known ids: cql, cql_sac, calql, calql_sac, sac_off, sac, hybrid, rankq,
// rankq_sac. Throws ConfigError for anything else.
AlgorithmSpec algorithm_spec(const std::string& id);

struct TrainConfig {
  std::string algorithm = "rankq";
  std::string env = "maze-medium";
  std::string dataset;  // .o2o path; may be empty for pure-online sac

  std::uint64_t offline_steps = 20000;
  std::uint64_t online_env_steps = 50000;
  std::uint64_t updates_per_env_step = 1;
  std::uint64_t batch_size = 256;
  double actor_lr = 1e-4;
  double critic_lr = 3e-4;
  double temp_lr = 3e-4;
  double grad_clip = 1.0;
  double mixing_ratio = 0.5;  // [0,1] or -1 for the pooled buffer
  std::uint64_t replay_capacity = 1000000;
  double gamma = 0.99;
  double tau = 0.005;
  std::uint64_t eval_every = 5000;
  std::uint64_t eval_episodes = 20;
  std::uint64_t eval_workers = 1;
  std::uint64_t seed = 0;
  std::vector<std::size_t> actor_hidden = {256, 256, 256};
  std::vector<std::size_t> critic_hidden = {256, 256, 256};
  bool auto_entropy = true;
  double target_entropy = 0.0;  // 0 means "use -action_dim"
  std::uint64_t probe_size = 512;
  std::uint64_t target_action_samples = 1;
  bool target_value_floor = false;  // floor the bootstrap at 0 ({0,1} rewards)

  // Critic objective knobs (shared across the matrix).
  double alpha = 1.0;
  bool use_lagrange = false;
  double target_action_gap = 0.8;
  std::uint64_t n_policy_actions = 10;
  std::uint64_t n_random_actions = 10;
  std::string cql_estimator = "logsumexp";  // or mean-policy
  double alpha0 = 1.0;
  double alpha1 = 1.0;
  double sigma = 0.15;
  bool ablate_double_sigma = false;
  bool ablate_no_permuted = false;
  bool ablate_no_chain = false;
  std::string fail_pair = "random";  // or "noisy" (pseudocode variant)

  CriticObjectiveConfig objective(CriticObjective kind) const;
  // Full validation; throws ConfigError listing every problem at once.
  void validate() const;
};

// Flat key=value text files, '#' starts a comment. Unknown keys are
// rejected. Overrides are additional key=value strings that win over the
// file contents.
TrainConfig load_train_config(const std::string& path,
                              const std::vector<std::string>& overrides = {});
TrainConfig parse_train_config(const std::vector<std::string>& lines,
                               const std::vector<std::string>& overrides = {});

// One line per key: "name  default  description" (drives --help).
std::string config_key_help();

}  // namespace o2o
