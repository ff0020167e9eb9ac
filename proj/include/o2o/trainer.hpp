#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "o2o/actor.hpp"
#include "o2o/config.hpp"
#include "o2o/critics.hpp"
#include "o2o/datastore.hpp"
#include "o2o/envs.hpp"

namespace o2o {

struct EvalResult {
  double success_rate = 0.0;
  double mean_length = 0.0;  // failure-inclusive (timeouts count full length)
};

// Deterministic-mode rollouts; episodes are seeded independently by index so
// the result does not depend on worker count.
EvalResult evaluate(const SquashedGaussianPolicy& policy, const PointMaze& env,
                    std::size_t n_episodes, std::uint64_t seed,
                    std::size_t workers = 1);

struct RunRow {
  std::uint64_t step = 0;  // cumulative gradient steps at eval time
  std::string phase;       // offline | online
  std::uint64_t env_steps = 0;
  std::uint64_t grad_steps = 0;
  double success_rate = 0.0;
  double avg_traj_len = 0.0;
  double loss_total = 0.0;
  double td = 0.0;
  double cql_reg = 0.0;
  double rank_succ = 0.0;
  double rank_chain = 0.0;
  double rank_fail = 0.0;
  double actor_loss = 0.0;
  double entropy = 0.0;
  double temperature = 0.0;
  double alpha = 0.0;
  double policy_data_gap = 0.0;
  double dqda_max = 0.0;
  double dqda_std = 0.0;
  double extra_critic_evals = 0.0;
  double wall_seconds = 0.0;  // timing sidecar only, kept out of the main CSV
};

struct RunRecord {
  std::vector<RunRow> rows;

  // Fixed column order; see docs/formats.md. Byte-deterministic for a given
  // (config, seed): wall-clock timing goes to the separate sidecar file.
  void write_csv(const std::string& path) const;
  void write_timing_csv(const std::string& path) const;
};

class Trainer {
 public:
  // out_dir empty disables checkpoints and CSV artifacts.
  Trainer(TrainConfig cfg, std::string out_dir);

  // Offline gradient phase; evaluates and checkpoints every eval_every steps.
  void run_offline();
  // Online rollout/update phase.
  void run_online();

  bool resume_from(const std::string& path);  // false if no checkpoint exists
  void save_checkpoint() const;

  const RunRecord& record() const { return record_; }
  const SquashedGaussianPolicy& policy() const { return policy_; }
  const CriticPair& critics() const { return pair_; }
  const TrainConfig& config() const { return cfg_; }
  std::uint64_t grad_steps() const { return grad_steps_; }
  std::uint64_t env_steps() const { return env_steps_; }
  double current_alpha() const;

  void write_artifacts() const;  // record.csv + timing.csv under out_dir

 private:
  void gradient_step(CriticObjective objective);
  Batch next_batch(Rng& rng) const;
  void do_eval(const char* phase);
  void push_finished_episode(std::vector<Transition> steps);
  void dqda_probe_stats(double& max_abs, double& std_dev, std::uint64_t index);

  TrainConfig cfg_;
  AlgorithmSpec spec_;
  std::string out_dir_;
  double effective_mixing_ = 0.5;

  PointMaze env_;
  std::optional<OfflineDataset> offline_;
  std::optional<MixedSampler> sampler_;
  CriticPair pair_;
  SquashedGaussianPolicy policy_;
  EntropyTemp temp_;
  AdamState opt_q1_, opt_q2_, opt_actor_;
  double log_alpha_dual_ = 0.0;
  ScalarAdam opt_dual_;

  std::uint64_t grad_steps_ = 0;
  std::uint64_t env_steps_ = 0;
  std::uint64_t episode_index_ = 0;
  std::uint64_t eval_index_ = 0;

  // Live episode state (serialized in checkpoints so resume is exact).
  bool episode_open_ = false;
  std::vector<Transition> episode_steps_;
  std::vector<double> episode_obs_;

  Matrix probe_states_;

  // Loss accumulators since the previous eval row.
  struct WindowStats {
    double total = 0, td = 0, reg = 0, succ = 0, chain = 0, fail = 0;
    double actor = 0, entropy = 0, gap = 0, extra = 0;
    std::uint64_t n = 0, n_actor = 0;
    void reset() { *this = WindowStats{}; }
  } window_;

  RunRecord record_;
  double wall_start_ = 0.0;
};

// Convenience wrapper used by the CLI: offline phase, online phase, artifact
// files, optional resume.
RunRecord run_training(const TrainConfig& cfg, const std::string& out_dir,
                       bool resume = false);

}  // namespace o2o
