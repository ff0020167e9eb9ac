#include <cmath>
#include <cstring>

#include "doctest.h"
#include "o2o/critics.hpp"
#include "o2o/errors.hpp"
#include "test_helpers.hpp"

using namespace o2o;

namespace {

constexpr double kLn2 = 0.6931471805599453;

Batch synthetic_batch(std::size_t b, std::size_t sd, std::size_t ad,
                      std::uint64_t seed, double success_fraction = 0.5) {
  Rng rng(seed);
  Batch batch;
  batch.states = Matrix(b, sd);
  batch.actions = Matrix(b, ad);
  batch.next_states = Matrix(b, sd);
  batch.rewards.assign(b, 0.0);
  batch.terminated.assign(b, 0);
  batch.truncated.assign(b, 0);
  batch.success.assign(b, 0);
  batch.refvals.assign(b, 0.0);
  batch.online.assign(b, 0);
  for (std::size_t i = 0; i < batch.states.size(); ++i)
    batch.states.data()[i] = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < batch.actions.size(); ++i)
    batch.actions.data()[i] = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < batch.next_states.size(); ++i)
    batch.next_states.data()[i] = rng.uniform(-1, 1);
  for (std::size_t i = 0; i < b; ++i) {
    bool succ = rng.uniform() < success_fraction;
    batch.success[i] = succ ? 1 : 0;
    batch.rewards[i] = succ && rng.uniform() < 0.3 ? 1.0 : 0.0;
    batch.terminated[i] = batch.rewards[i] > 0 ? 1 : 0;
    batch.refvals[i] = succ ? rng.uniform(0.2, 1.0) : 0.0;
  }
  return batch;
}

// Uniform stand-in policy with the correct density on [-1, 1]^d.
PolicySampler uniform_policy(std::size_t action_dim) {
  return [action_dim](const Matrix& states, Rng& rng) {
    PolicySample ps;
    ps.actions = Matrix(states.rows(), action_dim);
    for (std::size_t i = 0; i < ps.actions.size(); ++i)
      ps.actions.data()[i] = rng.uniform(-1, 1);
    ps.log_prob.assign(states.rows(),
                       static_cast<double>(action_dim) * std::log(0.5));
    return ps;
  };
}

void set_constant_output(Mlp& net, double c) {
  for (auto& w : net.weights()) w.fill(0.0);
  for (auto& b : net.biases()) b.fill(0.0);
  net.biases().back()(0, 0) = c;
}

}  // namespace

TEST_SUITE_BEGIN("critics");

TEST_CASE("rank_fn oracle values") {
  CHECK(rank_fn(1.0, 1.0) == doctest::Approx(kLn2).epsilon(1e-12));
  CHECK(rank_fn(40.0, 0.0) == doctest::Approx(0.0));
  CHECK(rank_fn(800.0, 0.0) == 0.0);  // stabilized tail, no overflow
  // ln(1 + e) for a one-nat violation
  CHECK(rank_fn(0.0, 1.0) == doctest::Approx(std::log(1.0 + std::exp(1.0))).epsilon(1e-12));
  CHECK(rank_fn(0.0, 1.0) == doctest::Approx(1.3132616875).epsilon(1e-9));
  CHECK(softplus_stable(-1000.0) == 0.0);
  CHECK(softplus_stable(1000.0) == 1000.0);
}

TEST_CASE("make_negatives: sigma 0 collapses the noisy variants") {
  Matrix a(3, 2);
  Rng rng(1);
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(-1, 1);
  NegativeActions neg = make_negatives(a, 0.0, rng);
  CHECK(std::memcmp(neg.noisy.data(), a.data(), a.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(neg.very_noisy.data(), a.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("make_negatives: batch of two swaps rows under permutation") {
  Matrix a(2, 2);
  a(0, 0) = 0.1; a(0, 1) = 0.2;
  a(1, 0) = -0.3; a(1, 1) = 0.4;
  Rng rng(2);
  NegativeActions neg = make_negatives(a, 0.15, rng);
  CHECK(neg.permuted(0, 0) == a(1, 0));
  CHECK(neg.permuted(0, 1) == a(1, 1));
  CHECK(neg.permuted(1, 0) == a(0, 0));
  CHECK(neg.permuted(1, 1) == a(0, 1));
}

TEST_CASE("make_negatives: empirical noise std matches sigma within 1%") {
  Matrix a(50000, 2);
  Rng rng(3);
  NegativeActions neg = make_negatives(a, 0.15, rng);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < neg.noise.size(); ++i) {
    sum += neg.noise.data()[i];
    sum2 += neg.noise.data()[i] * neg.noise.data()[i];
  }
  double n = static_cast<double>(neg.noise.size());
  double std_dev = std::sqrt(sum2 / n - (sum / n) * (sum / n));
  CHECK(std_dev == doctest::Approx(0.15).epsilon(0.01));
}

TEST_CASE("make_negatives: one epsilon draw is shared between noise scales") {
  Matrix a(64, 2);
  Rng rng(4);
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = rng.uniform(-1, 1);
  NegativeActions neg = make_negatives(a, 0.15, rng);
  for (std::size_t i = 0; i < a.size(); ++i) {
    // Construction: noisy = a + noise, very_noisy = a + 2*noise, same buffer.
    CHECK(neg.noisy.data()[i] == a.data()[i] + neg.noise.data()[i]);
    CHECK(neg.very_noisy.data()[i] == a.data()[i] + 2.0 * neg.noise.data()[i]);
    double d1 = neg.noisy.data()[i] - a.data()[i];
    double d2 = neg.very_noisy.data()[i] - a.data()[i];
    CHECK(d2 == doctest::Approx(2.0 * d1).epsilon(1e-12));
  }
  // Random negatives stay inside the action bounds.
  for (std::size_t i = 0; i < neg.random.size(); ++i) {
    CHECK(neg.random.data()[i] >= -1.0);
    CHECK(neg.random.data()[i] <= 1.0);
  }
}

TEST_CASE("rank_terms: all-equal Qs give 6 ln2 per success row, ln2 per failure row") {
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kRankq;
  std::vector<double> q(1, 0.37);
  // One success row.
  RankTerms succ = rank_terms(q, q, q, q, q, {1}, cfg);
  CHECK(succ.succ + succ.chain == doctest::Approx(6.0 * kLn2).epsilon(1e-12));
  CHECK(succ.succ == doctest::Approx(4.0 * kLn2).epsilon(1e-12));
  CHECK(succ.chain == doctest::Approx(2.0 * kLn2).epsilon(1e-12));
  CHECK(succ.fail == 0.0);
  // One failure row.
  RankTerms fail = rank_terms(q, q, q, q, q, {0}, cfg);
  CHECK(fail.fail == doctest::Approx(kLn2).epsilon(1e-12));
  CHECK(fail.succ == 0.0);
  CHECK(fail.weighted(1.0, 1.0) == doctest::Approx(kLn2).epsilon(1e-12));
}

TEST_CASE("rank_terms: hand-set success row evaluates to 1.3657") {
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kRankq;
  RankTerms t = rank_terms({2.0}, {1.0}, {0.5}, {-1.0}, {0.0}, {1}, cfg);
  // succ = sp(-1) + sp(-1.5) + sp(-3) + sp(-2), chain = sp(-0.5) + sp(-1.5)
  double succ = std::log1p(std::exp(-1.0)) + std::log1p(std::exp(-1.5)) +
                std::log1p(std::exp(-3.0)) + std::log1p(std::exp(-2.0));
  double chain = std::log1p(std::exp(-0.5)) + std::log1p(std::exp(-1.5));
  CHECK(t.succ == doctest::Approx(succ).epsilon(1e-12));
  CHECK(t.chain == doctest::Approx(chain).epsilon(1e-12));
  CHECK(t.succ + t.chain == doctest::Approx(1.3657).epsilon(1e-4));
  CHECK(t.succ + t.chain == doctest::Approx(1.3656805903).epsilon(1e-9));
}

TEST_CASE("rank_terms: ablations drop the permuted pair and the chain") {
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kRankq;
  std::vector<double> q(1, 0.0);
  cfg.ablate_no_permuted = true;
  RankTerms no_perm = rank_terms(q, q, q, q, q, {1}, cfg);
  CHECK(no_perm.succ == doctest::Approx(3.0 * kLn2));
  cfg.ablate_no_permuted = false;
  cfg.ablate_no_chain = true;
  RankTerms no_chain = rank_terms(q, q, q, q, q, {1}, cfg);
  CHECK(no_chain.chain == 0.0);
  CHECK(no_chain.succ == doctest::Approx(4.0 * kLn2));
}

TEST_CASE("rank_terms: ranking pushes the dataset action up, random down") {
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kRankq;
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    auto draw = [&]() { return std::vector<double>{rng.uniform(-2, 2)}; };
    RankTerms t = rank_terms(draw(), draw(), draw(), draw(), draw(), {1}, cfg);
    CHECK(t.d_rollout[0] <= 0.0);
    CHECK(t.d_random[0] >= 0.0);
  }
}

TEST_CASE("rank_terms: pseudocode failure variant ranks against the noisy action") {
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kRankq;
  cfg.fail_pair = FailPair::kNoisy;
  RankTerms t = rank_terms({1.0}, {0.5}, {0.0}, {-9.0}, {0.0}, {0}, cfg);
  CHECK(t.fail == doctest::Approx(softplus_stable(0.5 - 1.0)).epsilon(1e-12));
  CHECK(t.d_random[0] == 0.0);
  CHECK(t.d_noisy[0] > 0.0);
}

TEST_CASE("td_loss: terminated transition with reward 1 regresses to 1") {
  Rng rng(6);
  CriticPair pair = make_critic_pair(2, 2, {8}, Activation::kRelu, rng);
  set_constant_output(pair.q1, 0.0);
  set_constant_output(pair.q2, 0.0);
  set_constant_output(pair.target1, 5.0);  // must be ignored when terminated
  set_constant_output(pair.target2, 5.0);
  Batch batch = synthetic_batch(1, 2, 2, 7);
  batch.rewards[0] = 1.0;
  batch.terminated[0] = 1;
  Rng lrng(8);
  CriticLossResult res = td_loss(pair, batch, uniform_policy(2), 0.99, lrng);
  // Each twin: 0.5 * (0 - 1)^2
  CHECK(res.total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("td_loss: bootstrapped target r + gamma * Q, truncation keeps it") {
  Rng rng(9);
  CriticPair pair = make_critic_pair(2, 2, {8}, Activation::kRelu, rng);
  set_constant_output(pair.q1, 0.0);
  set_constant_output(pair.q2, 0.0);
  set_constant_output(pair.target1, 2.0);
  set_constant_output(pair.target2, 2.0);
  Batch batch = synthetic_batch(1, 2, 2, 10);
  batch.rewards[0] = 0.0;
  batch.terminated[0] = 0;
  batch.truncated[0] = 1;  // timeout: bootstrap must survive
  Rng lrng(11);
  CriticLossResult res = td_loss(pair, batch, uniform_policy(2), 0.99, lrng);
  // target = 0 + 0.99 * 2 = 1.98; per twin 0.5 * 1.98^2
  CHECK(res.total == doctest::Approx(1.98 * 1.98).epsilon(1e-12));
}

TEST_CASE("td_loss: a fixed point has zero loss and zero gradients") {
  Rng rng(12);
  CriticPair pair = make_critic_pair(2, 2, {8}, Activation::kRelu, rng);
  set_constant_output(pair.q1, 0.7);
  set_constant_output(pair.q2, 0.7);
  set_constant_output(pair.target1, 0.7);
  set_constant_output(pair.target2, 0.7);
  Batch batch = synthetic_batch(4, 2, 2, 13);
  for (std::size_t i = 0; i < 4; ++i) {
    batch.rewards[i] = 0.0;
    batch.terminated[i] = 0;
  }
  Rng lrng(14);
  CriticLossResult res = td_loss(pair, batch, uniform_policy(2), 1.0, lrng);
  CHECK(res.total == doctest::Approx(0.0));
  for (double v : o2o::testing::flatten(res.grad_q1)) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("td_loss gradient matches finite differences") {
  Rng rng(15);
  CriticPair pair = make_critic_pair(3, 2, {8, 8}, Activation::kRelu, rng);
  Batch batch = synthetic_batch(6, 3, 2, 16);
  auto policy = uniform_policy(2);
  auto eval = [&]() {
    Rng r(400);
    return td_loss(pair, batch, policy, 0.99, r).total;
  };
  Rng r(400);
  CriticLossResult res = td_loss(pair, batch, policy, 0.99, r);
  auto fd = o2o::testing::fd_param_grad(pair.q1, eval);
  CHECK(o2o::testing::grad_rel_err(o2o::testing::flatten(res.grad_q1), fd) < 1e-4);
}

TEST_CASE("cql regularizer: constant Q gives 0 under the plain estimator") {
  Rng rng(17);
  CriticPair pair = make_critic_pair(2, 2, {8}, Activation::kRelu, rng);
  set_constant_output(pair.q1, 0.4);
  set_constant_output(pair.q2, 0.4);
  Batch batch = synthetic_batch(5, 2, 2, 18);
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kCql;
  cfg.estimator = CqlEstimator::kMeanPolicy;
  Rng lrng(19);
  CriticLossResult res = cql_regularizer(pair, batch, uniform_policy(2), cfg, lrng);
  CHECK(res.total == doctest::Approx(0.0));
  for (double v : o2o::testing::flatten(res.grad_q1)) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("cql regularizer: constant Q under log-sum-exp gives d*ln2 per twin") {
  // With uniform proposals everywhere the density-corrected log-sum-exp of a
  // constant c is c + d*ln2, so the gap is exactly d*ln2.
  Rng rng(20);
  CriticPair pair = make_critic_pair(2, 2, {8}, Activation::kRelu, rng);
  set_constant_output(pair.q1, 0.4);
  set_constant_output(pair.q2, 0.4);
  Batch batch = synthetic_batch(5, 2, 2, 21);
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kCql;
  Rng lrng(22);
  CriticLossResult res = cql_regularizer(pair, batch, uniform_policy(2), cfg, lrng);
  CHECK(res.total == doctest::Approx(2.0 * 2.0 * kLn2).epsilon(1e-9));
  CHECK(res.extra_critic_evals == 20);
}

TEST_CASE("cql regularizer: policy samples one unit above data give about alpha") {
  // Plain estimator, so the value is exactly alpha * 1. Arrange Q = 1 for
  // policy-sampled actions and Q = 0 for data actions via a first-coordinate
  // indicator: data actions at a0 = -1, policy samples at a0 = +1.
  Rng rng(23);
  CriticPair pair = make_critic_pair(0, 1, {2}, Activation::kRelu, rng);
  // q(a) = relu(a0): weights [1], bias 0; output layer passes through.
  for (auto* q : {&pair.q1, &pair.q2}) {
    q->weights()[0].fill(0.0);
    q->biases()[0].fill(0.0);
    q->weights()[0](0, 0) = 1.0;
    q->weights()[1].fill(0.0);
    q->weights()[1](0, 0) = 1.0;
    q->biases()[1].fill(0.0);
  }
  Batch batch = synthetic_batch(4, 0, 1, 24);
  for (std::size_t i = 0; i < 4; ++i) batch.actions(i, 0) = -1.0;  // Q = 0
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kCql;
  cfg.alpha = 1.0;
  cfg.estimator = CqlEstimator::kMeanPolicy;
  PolicySampler ones = [](const Matrix& states, Rng&) {
    PolicySample ps;
    ps.actions = Matrix(states.rows(), 1, 1.0);  // Q = 1
    ps.log_prob.assign(states.rows(), 0.0);
    return ps;
  };
  Rng lrng(25);
  CriticLossResult res = cql_regularizer(pair, batch, ones, cfg, lrng);
  // Two twins, each contributing alpha * (1 - 0).
  CHECK(res.total == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("cql regularizer gradient matches finite differences") {
  Rng rng(26);
  CriticPair pair = make_critic_pair(2, 2, {6, 6}, Activation::kRelu, rng);
  Batch batch = synthetic_batch(4, 2, 2, 27);
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kCql;
  cfg.alpha = 1.7;
  cfg.n_policy_actions = 3;
  cfg.n_random_actions = 3;
  auto policy = uniform_policy(2);
  auto eval = [&]() {
    Rng r(500);
    return cql_regularizer(pair, batch, policy, cfg, r).total;
  };
  Rng r(500);
  CriticLossResult res = cql_regularizer(pair, batch, policy, cfg, r);
  auto fd = o2o::testing::fd_param_grad(pair.q2, eval);
  CHECK(o2o::testing::grad_rel_err(o2o::testing::flatten(res.grad_q2), fd) < 1e-4);
}

TEST_CASE("cql regularizer: one gradient step shrinks the gap") {
  Rng rng(28);
  CriticPair pair = make_critic_pair(2, 2, {16}, Activation::kRelu, rng);
  Batch batch = synthetic_batch(16, 2, 2, 29);
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kCql;
  auto policy = uniform_policy(2);
  auto gap = [&]() {
    Rng r(600);
    return cql_regularizer(pair, batch, policy, cfg, r).comp.estimator_gap;
  };
  double before = gap();
  Rng r(600);
  CriticLossResult res = cql_regularizer(pair, batch, policy, cfg, r);
  // Plain SGD step, small enough to stay in the linear regime.
  for (std::size_t l = 0; l < pair.q1.weights().size(); ++l) {
    for (std::size_t i = 0; i < pair.q1.weights()[l].size(); ++i) {
      pair.q1.weights()[l].data()[i] -= 1e-3 * res.grad_q1.dw[l].data()[i];
      pair.q2.weights()[l].data()[i] -= 1e-3 * res.grad_q2.dw[l].data()[i];
    }
    for (std::size_t i = 0; i < pair.q1.biases()[l].size(); ++i) {
      pair.q1.biases()[l].data()[i] -= 1e-3 * res.grad_q1.db[l].data()[i];
      pair.q2.biases()[l].data()[i] -= 1e-3 * res.grad_q2.db[l].data()[i];
    }
  }
  CHECK(gap() < before);
}

TEST_CASE("calql regularizer: clamp floors low Q values at the reference") {
  std::vector<std::vector<double>> q{{-5.0, -5.0}};
  std::vector<std::vector<double>> logp{{0.0, 0.0}};
  std::vector<double> data{0.0, 0.0};
  std::vector<double> ref{0.0, 0.0};
  CqlAggregate agg = cql_aggregate(q, logp, 1, data, &ref, CqlEstimator::kMeanPolicy);
  CHECK(agg.ood == doctest::Approx(0.0));       // max(-5, 0) = 0
  CHECK(agg.policy_grad_l1 == doctest::Approx(0.0));  // fully clamped
}

TEST_CASE("calql regularizer: inactive clamp reduces to plain CQL") {
  Rng rng(30);
  CriticPair pair = make_critic_pair(2, 2, {8}, Activation::kRelu, rng);
  Batch batch = synthetic_batch(6, 2, 2, 31);
  for (auto& v : batch.refvals) v = -100.0;  // clamp never active
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kCalql;
  auto policy = uniform_policy(2);
  Rng r1(700), r2(700);
  double cal = calql_regularizer(pair, batch, policy, cfg, r1).total;
  cfg.kind = CriticObjective::kCql;
  double cql = cql_regularizer(pair, batch, policy, cfg, r2).total;
  CHECK(cal == doctest::Approx(cql).epsilon(1e-12));
}

TEST_CASE("calql regularizer: half-clamped value sits between the bounds") {
  std::vector<std::vector<double>> q{{-5.0, 3.0}};
  std::vector<std::vector<double>> logp{{0.0, 0.0}};
  std::vector<double> data{0.0, 0.0};
  std::vector<double> ref{1.0, 1.0};
  double unclamped =
      cql_aggregate(q, logp, 1, data, nullptr, CqlEstimator::kMeanPolicy).gap;
  double clamped =
      cql_aggregate(q, logp, 1, data, &ref, CqlEstimator::kMeanPolicy).gap;
  std::vector<std::vector<double>> q_full{{1.0, 3.0}};  // everything clamped up
  double full =
      cql_aggregate(q_full, logp, 1, data, nullptr, CqlEstimator::kMeanPolicy).gap;
  CHECK(clamped > unclamped);
  CHECK(clamped <= full + 1e-12);
}

TEST_CASE("calql regularizer gradient matches finite differences") {
  Rng rng(32);
  CriticPair pair = make_critic_pair(2, 2, {6, 6}, Activation::kRelu, rng);
  Batch batch = synthetic_batch(4, 2, 2, 33);
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kCalql;
  cfg.n_policy_actions = 3;
  cfg.n_random_actions = 3;
  auto policy = uniform_policy(2);
  auto eval = [&]() {
    Rng r(800);
    return calql_regularizer(pair, batch, policy, cfg, r).total;
  };
  Rng r(800);
  CriticLossResult res = calql_regularizer(pair, batch, policy, cfg, r);
  auto fd = o2o::testing::fd_param_grad(pair.q1, eval);
  CHECK(o2o::testing::grad_rel_err(o2o::testing::flatten(res.grad_q1), fd) < 1e-4);
}

TEST_CASE("rankq_loss: zero-weight critics give the all-equal closed form") {
  Rng rng(34);
  CriticPair pair = make_critic_pair(2, 2, {8}, Activation::kRelu, rng);
  set_constant_output(pair.q1, 0.0);
  set_constant_output(pair.q2, 0.0);
  set_constant_output(pair.target1, 0.0);
  set_constant_output(pair.target2, 0.0);
  Batch batch = synthetic_batch(8, 2, 2, 35, 1.0);  // all success
  for (std::size_t i = 0; i < 8; ++i) {
    batch.rewards[i] = 0.0;
    batch.terminated[i] = 0;
  }
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kRankq;
  Rng lrng(36);
  CriticLossResult res = rankq_loss(pair, batch, uniform_policy(2), cfg, lrng);
  // TD is 0 (all Q equal 0, rewards 0); ranking is 6 ln2 per twin.
  CHECK(res.comp.td == doctest::Approx(0.0));
  CHECK(res.comp.rank_succ + res.comp.rank_chain ==
        doctest::Approx(2.0 * 6.0 * kLn2).epsilon(1e-12));
  CHECK(res.extra_critic_evals == 4);
}

TEST_CASE("rankq_loss: antmaze-style weighting scales the success terms") {
  Rng rng(37);
  CriticPair pair = make_critic_pair(2, 2, {8}, Activation::kRelu, rng);
  set_constant_output(pair.q1, 0.0);
  set_constant_output(pair.q2, 0.0);
  set_constant_output(pair.target1, 0.0);
  set_constant_output(pair.target2, 0.0);
  Batch batch = synthetic_batch(2, 2, 2, 38, 1.0);
  batch.success[0] = 1;
  batch.success[1] = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    batch.rewards[i] = 0.0;
    batch.terminated[i] = 0;
  }
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kRankq;
  cfg.alpha0 = 20.0;
  cfg.alpha1 = 1.0;
  Rng lrng(39);
  CriticLossResult res = rankq_loss(pair, batch, uniform_policy(2), cfg, lrng);
  // Per twin: (20 * 6 ln2 + 1 * ln2) / 2 rows.
  double expected = 2.0 * (20.0 * 6.0 * kLn2 + kLn2) / 2.0;
  CHECK(res.total == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("rankq_loss gradient matches finite differences") {
  Rng rng(40);
  CriticPair pair = make_critic_pair(2, 2, {6, 6}, Activation::kRelu, rng);
  Batch batch = synthetic_batch(6, 2, 2, 41);
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kRankq;
  cfg.alpha0 = 2.0;
  cfg.alpha1 = 0.5;
  auto policy = uniform_policy(2);
  auto eval = [&]() {
    Rng r(900);
    return rankq_loss(pair, batch, policy, cfg, r).total;
  };
  Rng r(900);
  CriticLossResult res = rankq_loss(pair, batch, policy, cfg, r);
  auto fd1 = o2o::testing::fd_param_grad(pair.q1, eval);
  CHECK(o2o::testing::grad_rel_err(o2o::testing::flatten(res.grad_q1), fd1) < 1e-4);
  auto fd2 = o2o::testing::fd_param_grad(pair.q2, eval);
  CHECK(o2o::testing::grad_rel_err(o2o::testing::flatten(res.grad_q2), fd2) < 1e-4);
}

TEST_CASE("rankq_loss rejects an empty batch") {
  Rng rng(42);
  CriticPair pair = make_critic_pair(2, 2, {8}, Activation::kRelu, rng);
  Batch batch;
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kRankq;
  Rng lrng(43);
  CHECK_THROWS_AS(rankq_loss(pair, batch, uniform_policy(2), cfg, lrng), DataError);
}

TEST_CASE("polyak_update: tau 1 is a hard copy, small tau an EMA") {
  Rng rng(44);
  CriticPair pair = make_critic_pair(2, 2, {4}, Activation::kRelu, rng);
  set_constant_output(pair.q1, 1.0);
  set_constant_output(pair.target1, 0.0);
  CriticPair hard = pair;
  polyak_update(hard, 1.0);
  CHECK(hard.target1.biases().back()(0, 0) == doctest::Approx(1.0));

  CriticPair ema = pair;
  polyak_update(ema, 0.005);
  CHECK(ema.target1.biases().back()(0, 0) == doctest::Approx(0.005));

  // Repeated updates close the gap geometrically: about half per ln2/tau.
  double tau = 0.01;
  CriticPair geo = pair;
  int halflife = static_cast<int>(std::ceil(std::log(2.0) / tau));
  for (int i = 0; i < halflife; ++i) polyak_update(geo, tau);
  double gap = 1.0 - geo.target1.biases().back()(0, 0);
  CHECK(gap == doctest::Approx(0.5).epsilon(0.02));

  CHECK_THROWS_AS(polyak_update(pair, 0.0), ConfigError);
  CHECK_THROWS_AS(polyak_update(pair, 1.5), ConfigError);
}

TEST_CASE("config validation lists all problems at once") {
  CriticObjectiveConfig cfg;
  cfg.kind = CriticObjective::kCql;
  cfg.alpha = -1.0;
  cfg.n_random_actions = 0;
  try {
    cfg.validate(true);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("alpha") != std::string::npos);
    CHECK(msg.find("n_random_actions") != std::string::npos);
  }
  CriticObjectiveConfig rq;
  rq.kind = CriticObjective::kRankq;
  rq.sigma = 0.0;
  CHECK_THROWS_AS(rq.validate(false), ConfigError);
}

TEST_SUITE_END();
