#pragma once

#include <cstdint>
#include <vector>

#include "o2o/critics.hpp"
#include "o2o/datastore.hpp"
#include "o2o/ndmath.hpp"
#include "o2o/rng.hpp"

namespace o2o {

// Squashed-Gaussian SAC policy. The trunk emits (mean | raw_log_std) per
// action dimension; log-std is squashed into [kLogStdMin, kLogStdMax] and
// actions into [-1, 1] by tanh, with the change-of-variables correction in
// the log density.
class SquashedGaussianPolicy {
 public:
  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 2.0;

  SquashedGaussianPolicy() = default;
  SquashedGaussianPolicy(std::size_t state_dim, std::size_t action_dim,
                         const std::vector<std::size_t>& hidden, Rng& rng);

  std::size_t state_dim() const { return trunk_.input_dim(); }
  std::size_t action_dim() const { return action_dim_; }
  Mlp& trunk() { return trunk_; }
  const Mlp& trunk() const { return trunk_; }

  // Reparameterized draw; log_prob includes the tanh correction.
  PolicySample sample(const Matrix& states, Rng& rng) const;
  // Greedy mode: tanh(mean).
  Matrix deterministic(const Matrix& states) const;
  // Density of a given action (used by quadrature checks).
  std::vector<double> log_prob(const Matrix& states, const Matrix& actions) const;

  PolicySampler sampler() const;

 private:
  Mlp trunk_;
  std::size_t action_dim_ = 0;
};

// Learnable entropy temperature. update() drives the temperature so the
// policy entropy tracks target_entropy; it is a no-op when auto-tuning is
// off.
struct EntropyTemp {
  double log_temp = 0.0;
  double target_entropy = -1.0;
  bool auto_tune = true;
  ScalarAdam adam;

  double temperature() const;
  void update(double mean_log_prob);
};

struct ActorLossResult {
  double loss = 0.0;
  GradBundle grad;           // w.r.t. policy trunk parameters
  double mean_log_prob = 0.0;
  double entropy = 0.0;      // -mean_log_prob
  double mean_q = 0.0;       // mean min-twin Q of the sampled actions
};

// mean(temp * log pi(a|s) - min-twin Q(s, a)) with a reparameterized sample;
// critic parameters are frozen, gradients flow through dQ/da.
ActorLossResult actor_loss(const SquashedGaussianPolicy& policy,
                           const CriticPair& critics, const Matrix& states,
                           double temperature, Rng& rng);

}  // namespace o2o
