#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "o2o/critics.hpp"
#include "o2o/datastore.hpp"
#include "o2o/envs.hpp"
#include "o2o/ndmath.hpp"

namespace o2o {

// Single-critic regression study on the disc task: a fixed state, a 2D
// action space, and one of the four critic objectives. Every transition is
// terminal, so the TD part reduces to regression on the {0, 1} rewards.
// CQL and Cal-QL estimate the policy expectation from uniform proposals
// (there is no actor here); Cal-QL clamps them at the per-row return.
struct ToyConfig {
  std::string objective = "rankq";  // td | cql | calql | rankq
  std::uint64_t iters = 2000;
  std::uint64_t n_success = 200;
  std::uint64_t n_failure = 200;
  std::uint64_t batch_size = 128;
  double lr = 3e-4;
  double grad_clip = 1.0;
  double disc_radius = 0.5;
  std::vector<std::size_t> hidden = {64, 64};

  double alpha = 10.0;       // cql/calql weight
  std::uint64_t n_samples = 20;  // uniform proposals per row

  double alpha0 = 1.0;
  double alpha1 = 1.0;
  double sigma = 0.15;
  bool ablate_double_sigma = false;
  bool ablate_no_permuted = false;
  bool ablate_no_chain = false;
  std::string fail_pair = "random";

  std::uint64_t stats_every = 100;
  std::uint64_t probe_size = 512;
  std::uint64_t seed = 0;
};

struct ToyStatsRow {
  std::uint64_t iter = 0;
  double loss = 0.0;
  double td = 0.0;
  double reg = 0.0;
  double rank_succ = 0.0;
  double rank_chain = 0.0;
  double rank_fail = 0.0;
  double dqda_max = 0.0;
  double dqda_std = 0.0;
};

struct ToyResult {
  Mlp critic;
  OfflineDataset dataset;
  std::vector<ToyStatsRow> stats;
};

ToyResult train_toy_critic(const ToyConfig& cfg);

void write_toy_stats_csv(const std::vector<ToyStatsRow>& stats,
                         const std::string& path);

}  // namespace o2o
