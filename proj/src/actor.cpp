#include "o2o/actor.hpp"

#include <cmath>

#include "o2o/errors.hpp"

namespace o2o {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)
constexpr double kLog2 = 0.6931471805599453;

double squash_log_std(double raw) {
  double t = std::tanh(raw);
  return SquashedGaussianPolicy::kLogStdMin +
         0.5 * (SquashedGaussianPolicy::kLogStdMax -
                SquashedGaussianPolicy::kLogStdMin) *
             (t + 1.0);
}

double squash_log_std_grad(double raw) {
  double t = std::tanh(raw);
  return 0.5 *
         (SquashedGaussianPolicy::kLogStdMax -
          SquashedGaussianPolicy::kLogStdMin) *
         (1.0 - t * t);
}

// log(1 - tanh(u)^2) without cancellation.
double log_one_minus_tanh_sq(double u) {
  return 2.0 * (kLog2 - u - softplus_stable(-2.0 * u));
}

}  // namespace

SquashedGaussianPolicy::SquashedGaussianPolicy(
    std::size_t state_dim, std::size_t action_dim,
    const std::vector<std::size_t>& hidden, Rng& rng)
    : action_dim_(action_dim) {
  std::vector<std::size_t> sizes;
  sizes.push_back(state_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(2 * action_dim);
  trunk_ = Mlp(sizes, Activation::kTanh, rng);
}

PolicySample SquashedGaussianPolicy::sample(const Matrix& states, Rng& rng) const {
  Matrix out = trunk_.forward(states);
  const std::size_t b = states.rows(), d = action_dim_;
  PolicySample ps;
  ps.actions = Matrix(b, d);
  ps.log_prob.assign(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double mean = out(i, j);
      double ls = squash_log_std(out(i, d + j));
      double std_dev = std::exp(ls);
      double eps = rng.gaussian();
      double u = mean + std_dev * eps;
      double a = std::tanh(u);
      ps.actions(i, j) = a;
      ps.log_prob[i] += -0.5 * eps * eps - ls - 0.5 * kLog2Pi;
      ps.log_prob[i] -= log_one_minus_tanh_sq(u);
    }
    ensure_finite(ps.log_prob[i], "policy sample log_prob");
  }
  return ps;
}

Matrix SquashedGaussianPolicy::deterministic(const Matrix& states) const {
  Matrix out = trunk_.forward(states);
  Matrix a(states.rows(), action_dim_);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < action_dim_; ++j) a(i, j) = std::tanh(out(i, j));
  return a;
}

std::vector<double> SquashedGaussianPolicy::log_prob(const Matrix& states,
                                                     const Matrix& actions) const {
  Matrix out = trunk_.forward(states);
  std::vector<double> lp(states.rows(), 0.0);
  for (std::size_t i = 0; i < states.rows(); ++i) {
    for (std::size_t j = 0; j < action_dim_; ++j) {
      double a = std::clamp(actions(i, j), -1.0 + 1e-12, 1.0 - 1e-12);
      double u = std::atanh(a);
      double mean = out(i, j);
      double ls = squash_log_std(out(i, action_dim_ + j));
      double z = (u - mean) / std::exp(ls);
      lp[i] += -0.5 * z * z - ls - 0.5 * kLog2Pi;
      lp[i] -= log_one_minus_tanh_sq(u);
    }
  }
  return lp;
}

PolicySampler SquashedGaussianPolicy::sampler() const {
  return [this](const Matrix& states, Rng& rng) { return sample(states, rng); };
}

double EntropyTemp::temperature() const { return std::exp(log_temp); }

void EntropyTemp::update(double mean_log_prob) {
  if (!auto_tune) return;
  // d/dlog_temp of -temp * (log_prob + target_entropy)
  double grad = -temperature() * (mean_log_prob + target_entropy);
  adam.update(log_temp, grad);
}

ActorLossResult actor_loss(const SquashedGaussianPolicy& policy,
                           const CriticPair& critics, const Matrix& states,
                           double temperature, Rng& rng) {
  const std::size_t b = states.rows();
  const std::size_t d = policy.action_dim();
  if (b == 0) throw DataError("actor_loss: empty batch");

  Tape trunk_tape;
  Matrix out = policy.trunk().forward(states, trunk_tape);

  Matrix eps(b, d), actions(b, d), u(b, d), std_dev(b, d);
  std::vector<double> log_prob(b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double ls = squash_log_std(out(i, d + j));
      double sd = std::exp(ls);
      double e = rng.gaussian();
      double uu = out(i, j) + sd * e;
      eps(i, j) = e;
      std_dev(i, j) = sd;
      u(i, j) = uu;
      actions(i, j) = std::tanh(uu);
      log_prob[i] += -0.5 * e * e - ls - 0.5 * kLog2Pi - log_one_minus_tanh_sq(uu);
    }
  }

  // Frozen critics, per-row min over the twins; dQ/da flows back through the
  // winning twin only.
  Tape tape1, tape2;
  Matrix q1 = q_values(critics.q1, states, actions, &tape1);
  Matrix q2 = q_values(critics.q2, states, actions, &tape2);
  Matrix up1(b, 1), up2(b, 1);
  double mean_q = 0.0;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    double lo = std::min(q1(i, 0), q2(i, 0));
    mean_q += lo * inv_b;
    // d(loss)/dQ_min = -1/B
    if (q1(i, 0) <= q2(i, 0))
      up1(i, 0) = -inv_b;
    else
      up2(i, 0) = -inv_b;
  }
  Matrix in_grad1, in_grad2;
  critics.q1.backward(tape1, up1, &in_grad1);
  critics.q2.backward(tape2, up2, &in_grad2);

  double mean_lp = 0.0;
  for (double lp : log_prob) mean_lp += lp * inv_b;
  ActorLossResult res;
  res.loss = temperature * mean_lp - mean_q;
  res.mean_log_prob = mean_lp;
  res.entropy = -mean_lp;
  res.mean_q = mean_q;

  // Upstream into the trunk outputs (mean | raw_log_std).
  const std::size_t sdim = states.cols();
  Matrix up_out(b, 2 * d);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double dq_da = in_grad1(i, sdim + j) + in_grad2(i, sdim + j);
      double da_du = 1.0 - actions(i, j) * actions(i, j);
      double dlogp_du = 2.0 - 4.0 * sigmoid_stable(-2.0 * u(i, j));
      double g_u = temperature * inv_b * dlogp_du + dq_da * da_du;
      up_out(i, j) = g_u;
      double g_ls = g_u * std_dev(i, j) * eps(i, j) - temperature * inv_b;
      up_out(i, d + j) = g_ls * squash_log_std_grad(out(i, d + j));
    }
  }
  res.grad = policy.trunk().backward(trunk_tape, up_out);
  ensure_finite(res.loss, "actor_loss");
  return res;
}

}  // namespace o2o
