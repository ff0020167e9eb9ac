#include "o2o/critics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "o2o/errors.hpp"

namespace o2o {

void CriticObjectiveConfig::validate(bool requires_policy_samples) const {
  std::string problems;
  auto complain = [&](const std::string& p) {
    if (!problems.empty()) problems += "; ";
    problems += p;
  };
  if (gamma < 0.0 || gamma > 1.0) complain("gamma must be in [0, 1]");
  if (kind == CriticObjective::kCql || kind == CriticObjective::kCalql) {
    if (alpha <= 0.0) complain("alpha must be > 0");
    if (n_random_actions < 1) complain("n_random_actions must be >= 1");
    if (requires_policy_samples && n_policy_actions < 1)
      complain("n_policy_actions must be >= 1");
    if (use_lagrange && target_action_gap <= 0.0)
      complain("target_action_gap must be > 0");
  }
  if (kind == CriticObjective::kRankq) {
    if (alpha0 <= 0.0) complain("alpha0 must be > 0");
    if (alpha1 <= 0.0) complain("alpha1 must be > 0");
    if (sigma <= 0.0) complain("sigma must be > 0");
  }
  if (!problems.empty()) throw ConfigError("critic config: " + problems);
}

CriticPair make_critic_pair(std::size_t state_dim, std::size_t action_dim,
                            const std::vector<std::size_t>& hidden,
                            Activation activation, Rng& rng) {
  std::vector<std::size_t> sizes;
  sizes.push_back(state_dim + action_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  CriticPair pair;
  pair.q1 = Mlp(sizes, activation, rng);
  pair.q2 = Mlp(sizes, activation, rng);
  pair.target1 = pair.q1;
  pair.target2 = pair.q2;
  return pair;
}

static void polyak_net(Mlp& target, const Mlp& live, double tau) {
  for (std::size_t l = 0; l < live.weights().size(); ++l) {
    Matrix& tw = target.weights()[l];
    const Matrix& lw = live.weights()[l];
    for (std::size_t i = 0; i < tw.size(); ++i)
      tw.data()[i] = (1.0 - tau) * tw.data()[i] + tau * lw.data()[i];
    Matrix& tb = target.biases()[l];
    const Matrix& lb = live.biases()[l];
    for (std::size_t i = 0; i < tb.size(); ++i)
      tb.data()[i] = (1.0 - tau) * tb.data()[i] + tau * lb.data()[i];
  }
}

void polyak_update(CriticPair& pair, double tau) {
  if (tau <= 0.0 || tau > 1.0)
    throw ConfigError("polyak_update: tau must be in (0, 1]");
  polyak_net(pair.target1, pair.q1, tau);
  polyak_net(pair.target2, pair.q2, tau);
}

Matrix hcat(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("hcat: row count mismatch");
  Matrix c(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row(r), a.row(r) + a.cols(), c.row(r));
    std::copy(b.row(r), b.row(r) + b.cols(), c.row(r) + a.cols());
  }
  return c;
}

Matrix q_values(const Mlp& q, const Matrix& states, const Matrix& actions,
                Tape* tape) {
  Matrix input = states.cols() == 0 ? actions : hcat(states, actions);
  if (tape) return q.forward(input, *tape);
  return q.forward(input);
}

NegativeActions make_negatives(const Matrix& actions, double sigma, Rng& rng) {
  if (actions.rows() == 0) throw DataError("make_negatives: empty batch");
  if (sigma < 0.0) throw ConfigError("make_negatives: sigma must be >= 0");
  const std::size_t b = actions.rows(), d = actions.cols();
  NegativeActions neg;
  neg.noise = Matrix(b, d);
  for (std::size_t i = 0; i < neg.noise.size(); ++i)
    neg.noise.data()[i] = sigma * rng.gaussian();
  neg.noisy = actions;
  neg.very_noisy = actions;
  for (std::size_t i = 0; i < neg.noise.size(); ++i) {
    neg.noisy.data()[i] += neg.noise.data()[i];
    neg.very_noisy.data()[i] += 2.0 * neg.noise.data()[i];
  }
  neg.random = Matrix(b, d);
  for (std::size_t i = 0; i < neg.random.size(); ++i)
    neg.random.data()[i] = rng.uniform(-1.0, 1.0);
  neg.permuted = Matrix(b, d);
  for (std::size_t r = 0; r < b; ++r) {
    const double* src = actions.row((r + 1) % b);
    std::copy(src, src + d, neg.permuted.row(r));
  }
  return neg;
}

double softplus_stable(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_stable(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double rank_fn(double q_pos, double q_neg) {
  return softplus_stable(q_neg - q_pos);
}

RankTerms rank_terms(const std::vector<double>& q_rollout,
                     const std::vector<double>& q_noisy,
                     const std::vector<double>& q_very_noisy,
                     const std::vector<double>& q_random,
                     const std::vector<double>& q_permuted,
                     const std::vector<std::uint8_t>& success,
                     const CriticObjectiveConfig& cfg) {
  const std::size_t b = q_rollout.size();
  if (b == 0) throw DataError("rank_terms: batch has no success and no failure rows");
  if (q_noisy.size() != b || q_very_noisy.size() != b || q_random.size() != b ||
      q_permuted.size() != b || success.size() != b)
    throw ShapeError("rank_terms: Q vector sizes disagree");

  RankTerms out;
  out.d_rollout.assign(b, 0.0);
  out.d_noisy.assign(b, 0.0);
  out.d_very_noisy.assign(b, 0.0);
  out.d_random.assign(b, 0.0);
  out.d_permuted.assign(b, 0.0);

  const double inv_b = 1.0 / static_cast<double>(b);
  double succ_sum = 0.0, chain_sum = 0.0, fail_sum = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    auto pair_term = [&](double q_pos, double q_neg, double weight,
                         double& d_pos, double& d_neg) {
      double s = sigmoid_stable(q_neg - q_pos) * weight * inv_b;
      d_neg += s;
      d_pos -= s;
      return rank_fn(q_pos, q_neg);
    };
    if (success[i]) {
      double s = 0.0;
      s += pair_term(q_rollout[i], q_noisy[i], cfg.alpha0, out.d_rollout[i], out.d_noisy[i]);
      s += pair_term(q_rollout[i], q_very_noisy[i], cfg.alpha0, out.d_rollout[i], out.d_very_noisy[i]);
      s += pair_term(q_rollout[i], q_random[i], cfg.alpha0, out.d_rollout[i], out.d_random[i]);
      if (!cfg.ablate_no_permuted)
        s += pair_term(q_rollout[i], q_permuted[i], cfg.alpha0, out.d_rollout[i], out.d_permuted[i]);
      succ_sum += s;
      if (!cfg.ablate_no_chain) {
        double c = 0.0;
        c += pair_term(q_noisy[i], q_very_noisy[i], cfg.alpha0, out.d_noisy[i], out.d_very_noisy[i]);
        c += pair_term(q_very_noisy[i], q_random[i], cfg.alpha0, out.d_very_noisy[i], out.d_random[i]);
        chain_sum += c;
      }
    } else {
      double q_neg = cfg.fail_pair == FailPair::kRandom ? q_random[i] : q_noisy[i];
      double& d_neg = cfg.fail_pair == FailPair::kRandom ? out.d_random[i] : out.d_noisy[i];
      fail_sum += pair_term(q_rollout[i], q_neg, cfg.alpha1, out.d_rollout[i], d_neg);
    }
  }
  out.succ = succ_sum * inv_b;
  out.chain = chain_sum * inv_b;
  out.fail = fail_sum * inv_b;
  return out;
}

CqlAggregate cql_aggregate(const std::vector<std::vector<double>>& sample_q,
                           const std::vector<std::vector<double>>& sample_logp,
                           std::size_t n_policy_sets,
                           const std::vector<double>& data_q,
                           const std::vector<double>* clamp_refvals,
                           CqlEstimator estimator) {
  const std::size_t b = data_q.size();
  const std::size_t n_sets = sample_q.size();
  if (n_sets == 0 || b == 0) throw DataError("cql_aggregate: empty input");
  if (sample_logp.size() != n_sets)
    throw ShapeError("cql_aggregate: log density sets do not match Q sets");

  CqlAggregate agg;
  agg.d_samples.assign(n_sets, std::vector<double>(b, 0.0));
  agg.d_data.assign(b, -1.0 / static_cast<double>(b));
  const double inv_b = 1.0 / static_cast<double>(b);

  double data_sum = 0.0;
  for (double q : data_q) data_sum += q;
  agg.data_mean = data_sum * inv_b;

  // Plain-mean diagnostic over the policy sets, before any clamping.
  if (n_policy_sets > 0) {
    double s = 0.0;
    for (std::size_t k = 0; k < n_policy_sets; ++k)
      for (std::size_t i = 0; i < b; ++i) s += sample_q[k][i];
    agg.plain_gap = s / static_cast<double>(n_policy_sets * b) - agg.data_mean;
  }

  // Effective sample values: Cal-QL raises policy-sample Qs to the per-row
  // reference; the gradient through a clamped entry is zero.
  auto effective = [&](std::size_t k, std::size_t i, bool& active) {
    double q = sample_q[k][i];
    active = true;
    if (clamp_refvals && k < n_policy_sets) {
      double v = (*clamp_refvals)[i];
      if (q < v) {
        active = false;
        return v;
      }
    }
    return q;
  };

  double ood_sum = 0.0;
  if (estimator == CqlEstimator::kMeanPolicy) {
    if (n_policy_sets == 0)
      throw ConfigError("cql_aggregate: mean-policy estimator needs policy samples");
    const double w = inv_b / static_cast<double>(n_policy_sets);
    for (std::size_t i = 0; i < b; ++i) {
      double m = 0.0;
      for (std::size_t k = 0; k < n_policy_sets; ++k) {
        bool active = false;
        m += effective(k, i, active);
        if (active) {
          agg.d_samples[k][i] = w;
          agg.policy_grad_l1 += w;
        }
      }
      ood_sum += m / static_cast<double>(n_policy_sets);
    }
  } else {
    // Per-row log-sum-exp over density-corrected values, normalized by the
    // sample count so equal Qs reduce to that Q.
    const double log_m = std::log(static_cast<double>(n_sets));
    for (std::size_t i = 0; i < b; ++i) {
      double mx = -1e300;
      std::vector<double> corrected(n_sets);
      std::vector<std::uint8_t> active(n_sets, 1);
      for (std::size_t k = 0; k < n_sets; ++k) {
        bool a = false;
        corrected[k] = effective(k, i, a) - sample_logp[k][i];
        active[k] = a ? 1 : 0;
        mx = std::max(mx, corrected[k]);
      }
      double z = 0.0;
      for (std::size_t k = 0; k < n_sets; ++k) z += std::exp(corrected[k] - mx);
      ood_sum += mx + std::log(z) - log_m;
      for (std::size_t k = 0; k < n_sets; ++k) {
        double w = std::exp(corrected[k] - mx) / z * inv_b;
        if (active[k]) {
          agg.d_samples[k][i] = w;
          if (k < n_policy_sets) agg.policy_grad_l1 += w;
        }
      }
    }
  }
  agg.ood = ood_sum * inv_b;
  agg.gap = agg.ood - agg.data_mean;
  ensure_finite(agg.gap, "cql_aggregate");
  return agg;
}

namespace {

std::vector<double> column0(const Matrix& m) {
  std::vector<double> v(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) v[i] = m(i, 0);
  return v;
}

Matrix as_column(const std::vector<double>& v) {
  Matrix m(v.size(), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
  return m;
}

// Bootstrapped targets shared by TD and RankQ. The next-action expectation
// is estimated from n_target policy samples (min over the target twins per
// sample, then averaged).
std::vector<double> td_targets(const CriticPair& pair, const Batch& batch,
                               const PolicySampler& policy, double gamma,
                               Rng& rng, std::size_t n_target,
                               double value_floor = -1e300) {
  if (n_target == 0) throw ConfigError("td_targets: need at least one sample");
  std::vector<double> bootstrap(batch.size(), 0.0);
  for (std::size_t k = 0; k < n_target; ++k) {
    PolicySample next = policy(batch.next_states, rng);
    Matrix t1 = q_values(pair.target1, batch.next_states, next.actions);
    Matrix t2 = q_values(pair.target2, batch.next_states, next.actions);
    for (std::size_t i = 0; i < batch.size(); ++i)
      bootstrap[i] += std::min(t1(i, 0), t2(i, 0)) / static_cast<double>(n_target);
  }
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    // Truncation (timeout) is not termination: the episode would have
    // continued, so the bootstrap stays.
    double cont = batch.terminated[i] ? 0.0 : 1.0;
    y[i] = batch.rewards[i] + gamma * cont * std::max(bootstrap[i], value_floor);
    ensure_finite(y[i], "td_targets");
  }
  return y;
}

double td_term(const Mlp& q, const Matrix& states, const Matrix& actions,
               const std::vector<double>& y, GradBundle& grad_out) {
  Tape tape;
  Matrix qv = q_values(q, states, actions, &tape);
  const std::size_t b = y.size();
  Matrix upstream(b, 1);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double diff = qv(i, 0) - y[i];
    loss += 0.5 * diff * diff;
    upstream(i, 0) = diff / static_cast<double>(b);
  }
  loss /= static_cast<double>(b);
  GradBundle g = q.backward(tape, upstream);
  if (grad_out.empty())
    grad_out = std::move(g);
  else
    grad_out.add_scaled(g, 1.0);
  return loss;
}

}  // namespace

CriticLossResult td_loss(const CriticPair& pair, const Batch& batch,
                         const PolicySampler& policy, double gamma, Rng& rng,
                         std::size_t n_target, double target_value_floor) {
  if (batch.size() == 0) throw DataError("td_loss: empty batch");
  std::vector<double> y =
      td_targets(pair, batch, policy, gamma, rng, n_target, target_value_floor);
  CriticLossResult res;
  res.comp.td += td_term(pair.q1, batch.states, batch.actions, y, res.grad_q1);
  res.comp.td += td_term(pair.q2, batch.states, batch.actions, y, res.grad_q2);
  res.total = res.comp.td;
  return res;
}

namespace {

// Shared CQL / Cal-QL machinery; `clamp` selects the calibrated variant.
CriticLossResult conservative_regularizer(const CriticPair& pair,
                                          const Batch& batch,
                                          const PolicySampler& policy,
                                          const CriticObjectiveConfig& cfg,
                                          Rng& rng, bool clamp) {
  if (batch.size() == 0) throw DataError("cql_regularizer: empty batch");
  cfg.validate(true);
  const std::size_t b = batch.size();
  const std::size_t d = batch.actions.cols();

  const std::vector<double>* refvals = nullptr;
  if (clamp) {
    for (double v : batch.refvals) ensure_finite(v, "calql refval");
    refvals = &batch.refvals;
  }

  // Sample sets are shared between the twins. Policy sets first.
  std::vector<Matrix> sample_actions;
  std::vector<std::vector<double>> sample_logp;
  for (std::size_t k = 0; k < cfg.n_policy_actions; ++k) {
    PolicySample ps = policy(batch.states, rng);
    sample_actions.push_back(std::move(ps.actions));
    sample_logp.push_back(std::move(ps.log_prob));
  }
  const bool want_random = cfg.estimator == CqlEstimator::kLogSumExp;
  const double uniform_logp = static_cast<double>(d) * std::log(0.5);
  if (want_random) {
    for (std::size_t k = 0; k < cfg.n_random_actions; ++k) {
      Matrix a(b, d);
      for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(-1.0, 1.0);
      sample_actions.push_back(std::move(a));
      sample_logp.emplace_back(b, uniform_logp);
    }
  }

  CriticLossResult res;
  res.extra_critic_evals = static_cast<int>(sample_actions.size());

  auto one_twin = [&](const Mlp& q, GradBundle& grad_out) {
    Tape data_tape;
    Matrix data_q = q_values(q, batch.states, batch.actions, &data_tape);
    std::vector<Tape> tapes(sample_actions.size());
    std::vector<std::vector<double>> sample_q(sample_actions.size());
    for (std::size_t k = 0; k < sample_actions.size(); ++k)
      sample_q[k] = column0(q_values(q, batch.states, sample_actions[k], &tapes[k]));
    CqlAggregate agg =
        cql_aggregate(sample_q, sample_logp, cfg.n_policy_actions,
                      column0(data_q), refvals, cfg.estimator);

    for (std::size_t k = 0; k < sample_actions.size(); ++k) {
      Matrix up = as_column(agg.d_samples[k]);
      scale_inplace(up, cfg.alpha);
      GradBundle g = q.backward(tapes[k], up);
      if (grad_out.empty())
        grad_out = std::move(g);
      else
        grad_out.add_scaled(g, 1.0);
    }
    Matrix up = as_column(agg.d_data);
    scale_inplace(up, cfg.alpha);
    grad_out.add_scaled(q.backward(data_tape, up), 1.0);

    res.comp.cql_reg += cfg.alpha * agg.gap;
    res.comp.estimator_gap += 0.5 * agg.gap;
    res.comp.plain_policy_data_gap += 0.5 * agg.plain_gap;
    res.comp.policy_sample_grad_l1 += agg.policy_grad_l1;
  };
  one_twin(pair.q1, res.grad_q1);
  one_twin(pair.q2, res.grad_q2);
  res.total = res.comp.cql_reg;
  return res;
}

}  // namespace

CriticLossResult cql_regularizer(const CriticPair& pair, const Batch& batch,
                                 const PolicySampler& policy,
                                 const CriticObjectiveConfig& cfg, Rng& rng) {
  return conservative_regularizer(pair, batch, policy, cfg, rng, false);
}

CriticLossResult calql_regularizer(const CriticPair& pair, const Batch& batch,
                                   const PolicySampler& policy,
                                   const CriticObjectiveConfig& cfg, Rng& rng) {
  return conservative_regularizer(pair, batch, policy, cfg, rng, true);
}

CriticLossResult rankq_loss(const CriticPair& pair, const Batch& batch,
                            const PolicySampler& policy,
                            const CriticObjectiveConfig& cfg, Rng& rng) {
  if (batch.size() == 0)
    throw DataError("rankq_loss: batch has no success and no failure rows");

  NegativeActions neg = make_negatives(batch.actions, cfg.effective_sigma(), rng);
  std::vector<double> y =
      td_targets(pair, batch, policy, cfg.gamma, rng,
                 cfg.n_target_action_samples, cfg.target_value_floor);

  CriticLossResult res;
  res.extra_critic_evals = cfg.ablate_no_permuted ? 3 : 4;

  auto one_twin = [&](const Mlp& q, GradBundle& grad_out) {
    Tape tape_roll, tape_noisy, tape_very, tape_rand, tape_perm;
    Matrix q_roll = q_values(q, batch.states, batch.actions, &tape_roll);
    Matrix q_noisy = q_values(q, batch.states, neg.noisy, &tape_noisy);
    Matrix q_very = q_values(q, batch.states, neg.very_noisy, &tape_very);
    Matrix q_rand = q_values(q, batch.states, neg.random, &tape_rand);
    Matrix q_perm;
    if (!cfg.ablate_no_permuted)
      q_perm = q_values(q, batch.states, neg.permuted, &tape_perm);
    else
      q_perm = Matrix(batch.size(), 1);

    RankTerms terms = rank_terms(column0(q_roll), column0(q_noisy),
                                 column0(q_very), column0(q_rand),
                                 column0(q_perm), batch.success, cfg);

    // Dataset-action upstream carries both the TD error and the ranking pull.
    const std::size_t b = batch.size();
    Matrix up_roll(b, 1);
    double td = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      double diff = q_roll(i, 0) - y[i];
      td += 0.5 * diff * diff;
      up_roll(i, 0) = diff / static_cast<double>(b) + terms.d_rollout[i];
    }
    td /= static_cast<double>(b);

    grad_out = q.backward(tape_roll, up_roll);
    grad_out.add_scaled(q.backward(tape_noisy, as_column(terms.d_noisy)), 1.0);
    grad_out.add_scaled(q.backward(tape_very, as_column(terms.d_very_noisy)), 1.0);
    grad_out.add_scaled(q.backward(tape_rand, as_column(terms.d_random)), 1.0);
    if (!cfg.ablate_no_permuted)
      grad_out.add_scaled(q.backward(tape_perm, as_column(terms.d_permuted)), 1.0);

    res.comp.td += td;
    res.comp.rank_succ += terms.succ;
    res.comp.rank_chain += terms.chain;
    res.comp.rank_fail += terms.fail;
  };
  one_twin(pair.q1, res.grad_q1);
  one_twin(pair.q2, res.grad_q2);

  res.total = res.comp.td +
              cfg.alpha0 * (res.comp.rank_succ + res.comp.rank_chain) +
              cfg.alpha1 * res.comp.rank_fail;
  return res;
}

}  // namespace o2o
