#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "o2o/datastore.hpp"
#include "o2o/ndmath.hpp"
#include "o2o/rng.hpp"

namespace o2o {

enum class CriticObjective { kTd, kCql, kCalql, kRankq };

enum class CqlEstimator {
  kLogSumExp,   // pooled policy+uniform samples with importance correction
  kMeanPolicy,  // plain mean over policy samples
};

// The two readings of the failure-row ranking pair: the equations compare the
// failure action against a random action; the reference pseudocode compares
// against the noisy action. Both are exposed, the equations are the default.
enum class FailPair { kRandom, kNoisy };

struct CriticObjectiveConfig {
  CriticObjective kind = CriticObjective::kTd;
  double gamma = 0.99;
  // Samples used for the next-action expectation in the bootstrap target.
  std::size_t n_target_action_samples = 1;
  // Optional lower bound on the bootstrap value (e.g. 0 for {0,1} rewards
  // with success termination, where true values cannot be negative).
  // Disabled by default: the plain bootstrapped target is used as-is.
  double target_value_floor = -1e300;

  // CQL / Cal-QL
  double alpha = 1.0;
  bool use_lagrange = false;
  double target_action_gap = 0.8;
  std::size_t n_policy_actions = 10;
  std::size_t n_random_actions = 10;
  CqlEstimator estimator = CqlEstimator::kLogSumExp;

  // RankQ
  double alpha0 = 1.0;
  double alpha1 = 1.0;
  double sigma = 0.15;
  bool ablate_double_sigma = false;
  bool ablate_no_permuted = false;
  bool ablate_no_chain = false;
  FailPair fail_pair = FailPair::kRandom;

  double effective_sigma() const {
    return ablate_double_sigma ? 2.0 * sigma : sigma;
  }

  // Throws ConfigError listing every violated constraint.
  void validate(bool requires_policy_samples) const;
};

// Twin critics with lagged target copies. Q networks map concat(state,
// action) to a scalar.
struct CriticPair {
  Mlp q1, q2;
  Mlp target1, target2;
};

CriticPair make_critic_pair(std::size_t state_dim, std::size_t action_dim,
                            const std::vector<std::size_t>& hidden,
                            Activation activation, Rng& rng);

// theta_bar <- (1 - tau) * theta_bar + tau * theta
void polyak_update(CriticPair& pair, double tau);

// Horizontal concat used to build critic inputs.
Matrix hcat(const Matrix& a, const Matrix& b);
Matrix q_values(const Mlp& q, const Matrix& states, const Matrix& actions,
                Tape* tape = nullptr);

// The self-supervised comparison actions for one batch. One epsilon draw per
// row is shared between the noisy and very-noisy variants (very_noisy uses
// exactly twice the stored noise); random actions are fresh uniforms and
// permuted actions are the batch rolled by one row.
struct NegativeActions {
  Matrix noise;       // sigma-scaled epsilon
  Matrix noisy;       // a + noise
  Matrix very_noisy;  // a + 2 * noise
  Matrix random;      // U(-1, 1)
  Matrix permuted;    // row i takes row (i+1) mod B
};

NegativeActions make_negatives(const Matrix& actions, double sigma, Rng& rng);

// Numerically safe softplus: max(x, 0) + log1p(exp(-|x|)).
double softplus_stable(double x);
double sigmoid_stable(double x);

// Pairwise ranking function sp(q_neg - q_pos); zero when the positive action
// wins by a wide margin.
double rank_fn(double q_pos, double q_neg);

// Value-level RankQ ranking terms for one critic's Q vectors. Per-row sums
// follow the reference formulation: success rows accumulate the four
// success pairs and the two chain pairs, failure rows the single failure
// pair, and the batch loss is the mean over all rows.
struct RankTerms {
  double succ = 0.0;   // mean over batch of per-row success-pair sums
  double chain = 0.0;  // mean over batch of per-row chain-pair sums
  double fail = 0.0;   // mean over batch of per-row failure-pair sums
  // d(alpha0*(succ+chain) + alpha1*fail)/dQ, one entry per row.
  std::vector<double> d_rollout, d_noisy, d_very_noisy, d_random, d_permuted;

  double weighted(double alpha0, double alpha1) const {
    return alpha0 * (succ + chain) + alpha1 * fail;
  }
};

RankTerms rank_terms(const std::vector<double>& q_rollout,
                     const std::vector<double>& q_noisy,
                     const std::vector<double>& q_very_noisy,
                     const std::vector<double>& q_random,
                     const std::vector<double>& q_permuted,
                     const std::vector<std::uint8_t>& success,
                     const CriticObjectiveConfig& cfg);

// Value-level CQL/Cal-QL aggregation for one critic. `sample_q[k]` holds the
// Q values of sample set k (policy sets first, then random sets), and
// `sample_logp[k]` the matching log densities. With `clamp_refvals` non-null
// (Cal-QL), policy-sample Q values are raised to the per-row reference value
// before aggregation.
struct CqlAggregate {
  double gap = 0.0;        // estimator(E_pi Q) - mean(Q_data), unscaled
  double ood = 0.0;        // the OOD estimate alone
  double data_mean = 0.0;
  double plain_gap = 0.0;  // plain mean over policy samples - data mean
  std::vector<std::vector<double>> d_samples;  // dGap/dQ per sample set
  std::vector<double> d_data;                  // dGap/dQ_data
  double policy_grad_l1 = 0.0;  // sum |dGap/dQ| over policy samples
};

CqlAggregate cql_aggregate(const std::vector<std::vector<double>>& sample_q,
                           const std::vector<std::vector<double>>& sample_logp,
                           std::size_t n_policy_sets,
                           const std::vector<double>& data_q,
                           const std::vector<double>* clamp_refvals,
                           CqlEstimator estimator);

// A reparameterized policy draw at a batch of states.
struct PolicySample {
  Matrix actions;                // B x action_dim, inside [-1, 1]
  std::vector<double> log_prob;  // matching densities
};
using PolicySampler = std::function<PolicySample(const Matrix& states, Rng& rng)>;

struct LossComponents {
  double td = 0.0;
  double cql_reg = 0.0;
  double rank_succ = 0.0;
  double rank_chain = 0.0;
  double rank_fail = 0.0;
  // Diagnostics
  double plain_policy_data_gap = 0.0;  // mean policy-sample Q - mean data Q
  double estimator_gap = 0.0;          // estimator-based gap (drives the dual)
  double policy_sample_grad_l1 = 0.0;  // Cal-QL clamp diagnostic
};

// Loss value plus parameter gradients for both twins. Values and components
// are sums over the two critics. `extra_critic_evals` counts the batched
// critic evaluations beyond the dataset action (the CQL-vs-RankQ budget).
struct CriticLossResult {
  double total = 0.0;
  LossComponents comp;
  GradBundle grad_q1, grad_q2;
  int extra_critic_evals = 0;
};

// 1/2 MSE toward r + gamma * (1 - terminated) * min-twin target Q averaged
// over n_target policy-sampled next actions. Truncated rows still bootstrap.
CriticLossResult td_loss(const CriticPair& pair, const Batch& batch,
                         const PolicySampler& policy, double gamma, Rng& rng,
                         std::size_t n_target = 1,
                         double target_value_floor = -1e300);

// alpha * (estimated E_{a~pi} Q - E_data Q), applied to each twin
// independently. Regularizer only; callers add td_loss.
CriticLossResult cql_regularizer(const CriticPair& pair, const Batch& batch,
                                 const PolicySampler& policy,
                                 const CriticObjectiveConfig& cfg, Rng& rng);

// CQL with policy-sample Q values clamped from below at the per-row
// reference value (the frozen return-to-go carried by the batch).
CriticLossResult calql_regularizer(const CriticPair& pair, const Batch& batch,
                                   const PolicySampler& policy,
                                   const CriticObjectiveConfig& cfg, Rng& rng);

// Full RankQ objective: alpha0 * (succ + chain) + alpha1 * fail + TD.
CriticLossResult rankq_loss(const CriticPair& pair, const Batch& batch,
                            const PolicySampler& policy,
                            const CriticObjectiveConfig& cfg, Rng& rng);

}  // namespace o2o
