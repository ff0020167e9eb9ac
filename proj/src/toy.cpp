#include "o2o/toy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "o2o/errors.hpp"

namespace o2o {

namespace {

struct ToyBatch {
  Matrix actions;
  std::vector<double> rewards;
  std::vector<std::uint8_t> success;
  std::vector<double> refvals;
};

ToyBatch draw_batch(const OfflineDataset& ds, std::size_t n, Rng& rng) {
  ToyBatch b;
  b.actions = Matrix(n, 2);
  b.rewards.assign(n, 0.0);
  b.success.assign(n, 0);
  b.refvals.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ref = ds.all_index()[rng.uniform_index(ds.num_transitions())];
    const Transition& t = ds.at(ref);
    b.actions(i, 0) = t.action[0];
    b.actions(i, 1) = t.action[1];
    b.rewards[i] = t.reward;
    b.success[i] = ds.success_at(ref) ? 1 : 0;
    b.refvals[i] = ds.return_to_go_at(ref);
  }
  return b;
}

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

void csv_number(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace

ToyResult train_toy_critic(const ToyConfig& cfg) {
  if (cfg.objective != "td" && cfg.objective != "cql" &&
      cfg.objective != "calql" && cfg.objective != "rankq")
    throw ConfigError("toy objective must be td, cql, calql or rankq");
  if (cfg.iters == 0 || cfg.batch_size == 0)
    throw ConfigError("toy: iters and batch_size must be > 0");

  ToyDiscTask task;
  task.success_radius = cfg.disc_radius;
  ToyResult result;
  result.dataset = toy_sample_dataset(task, cfg.n_success, cfg.n_failure, cfg.seed);

  Rng init = Rng::stream(cfg.seed, "toy-init");
  std::vector<std::size_t> sizes;
  sizes.push_back(2);
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(1);
  result.critic = Mlp(sizes, Activation::kRelu, init);
  AdamState opt(result.critic, cfg.lr);

  CriticObjectiveConfig rank_cfg;
  rank_cfg.kind = CriticObjective::kRankq;
  rank_cfg.alpha0 = cfg.alpha0;
  rank_cfg.alpha1 = cfg.alpha1;
  rank_cfg.sigma = cfg.sigma;
  rank_cfg.ablate_double_sigma = cfg.ablate_double_sigma;
  rank_cfg.ablate_no_permuted = cfg.ablate_no_permuted;
  rank_cfg.ablate_no_chain = cfg.ablate_no_chain;
  rank_cfg.fail_pair = cfg.fail_pair == "noisy" ? FailPair::kNoisy : FailPair::kRandom;

  // Fixed probe of uniform actions for the dQ/da trace.
  Matrix probe(cfg.probe_size, 2);
  {
    Rng prng = Rng::stream(cfg.seed, "toy-probe");
    for (std::size_t i = 0; i < probe.size(); ++i)
      probe.data()[i] = prng.uniform(-1.0, 1.0);
  }
  const double uniform_logp = 2.0 * std::log(0.5);

  for (std::uint64_t iter = 1; iter <= cfg.iters; ++iter) {
    Rng rng = Rng::stream(cfg.seed, "toy-iter", iter);
    ToyBatch batch = draw_batch(result.dataset, cfg.batch_size, rng);
    const std::size_t b = batch.rewards.size();
    const double inv_b = 1.0 / static_cast<double>(b);

    Tape data_tape;
    Matrix q = result.critic.forward(batch.actions, data_tape);

    // Regression toward the {0,1} rewards (every toy transition is terminal).
    Matrix up_data(b, 1);
    double td = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      double diff = q(i, 0) - batch.rewards[i];
      td += 0.5 * diff * diff * inv_b;
      up_data(i, 0) = diff * inv_b;
    }

    double reg = 0.0, rank_succ = 0.0, rank_chain = 0.0, rank_fail = 0.0;
    GradBundle grad;

    if (cfg.objective == "cql" || cfg.objective == "calql") {
      std::vector<std::vector<double>> sample_q(cfg.n_samples);
      std::vector<std::vector<double>> sample_logp(
          cfg.n_samples, std::vector<double>(b, uniform_logp));
      std::vector<Tape> tapes(cfg.n_samples);
      for (std::size_t k = 0; k < cfg.n_samples; ++k) {
        Matrix a(b, 2);
        for (std::size_t i = 0; i < a.size(); ++i)
          a.data()[i] = rng.uniform(-1.0, 1.0);
        sample_q[k] = column0(result.critic.forward(a, tapes[k]));
      }
      const std::vector<double>* clamp =
          cfg.objective == "calql" ? &batch.refvals : nullptr;
      CqlAggregate agg = cql_aggregate(sample_q, sample_logp, cfg.n_samples,
                                       column0(q), clamp,
                                       CqlEstimator::kLogSumExp);
      reg = cfg.alpha * agg.gap;
      for (std::size_t k = 0; k < cfg.n_samples; ++k) {
        Matrix up = as_column(agg.d_samples[k]);
        scale_inplace(up, cfg.alpha);
        GradBundle g = result.critic.backward(tapes[k], up);
        if (grad.empty())
          grad = std::move(g);
        else
          grad.add_scaled(g, 1.0);
      }
      for (std::size_t i = 0; i < b; ++i)
        up_data(i, 0) += cfg.alpha * agg.d_data[i];
    } else if (cfg.objective == "rankq") {
      NegativeActions neg =
          make_negatives(batch.actions, rank_cfg.effective_sigma(), rng);
      Tape tn, tv, tr, tp;
      Matrix qn = result.critic.forward(neg.noisy, tn);
      Matrix qv = result.critic.forward(neg.very_noisy, tv);
      Matrix qr = result.critic.forward(neg.random, tr);
      Matrix qp = rank_cfg.ablate_no_permuted
                      ? Matrix(b, 1)
                      : result.critic.forward(neg.permuted, tp);
      RankTerms terms = rank_terms(column0(q), column0(qn), column0(qv),
                                   column0(qr), column0(qp), batch.success,
                                   rank_cfg);
      rank_succ = terms.succ;
      rank_chain = terms.chain;
      rank_fail = terms.fail;
      for (std::size_t i = 0; i < b; ++i) up_data(i, 0) += terms.d_rollout[i];
      grad = result.critic.backward(tn, as_column(terms.d_noisy));
      grad.add_scaled(result.critic.backward(tv, as_column(terms.d_very_noisy)), 1.0);
      grad.add_scaled(result.critic.backward(tr, as_column(terms.d_random)), 1.0);
      if (!rank_cfg.ablate_no_permuted)
        grad.add_scaled(result.critic.backward(tp, as_column(terms.d_permuted)), 1.0);
    }

    GradBundle data_grad = result.critic.backward(data_tape, up_data);
    if (grad.empty())
      grad = std::move(data_grad);
    else
      grad.add_scaled(data_grad, 1.0);

    adam_step(result.critic, clip_global_norm(std::move(grad), cfg.grad_clip), opt);

    if (iter % cfg.stats_every == 0 || iter == cfg.iters) {
      ToyStatsRow row;
      row.iter = iter;
      row.td = td;
      row.reg = reg;
      row.rank_succ = rank_succ;
      row.rank_chain = rank_chain;
      row.rank_fail = rank_fail;
      row.loss = td + reg +
                 cfg.alpha0 * (rank_succ + rank_chain) + cfg.alpha1 * rank_fail;
      Tape ptape;
      result.critic.forward(probe, ptape);
      Matrix ones(probe.rows(), 1, 1.0);
      Matrix in_grad;
      result.critic.backward(ptape, ones, &in_grad);
      double sum = 0.0, sum2 = 0.0;
      for (std::size_t i = 0; i < in_grad.size(); ++i) {
        double g = std::abs(in_grad.data()[i]);
        row.dqda_max = std::max(row.dqda_max, g);
        sum += g;
        sum2 += g * g;
      }
      double n = static_cast<double>(in_grad.size());
      double mean = sum / n;
      row.dqda_std = std::sqrt(std::max(0.0, sum2 / n - mean * mean));
      result.stats.push_back(row);
    }
  }
  return result;
}

void write_toy_stats_csv(const std::vector<ToyStatsRow>& stats,
                         const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("toy stats: cannot open " + path);
  f << "iter,loss,td,reg,rank_succ,rank_chain,rank_fail,dqda_max,dqda_std\n";
  std::string line;
  for (const ToyStatsRow& r : stats) {
    line = std::to_string(r.iter);
    for (double v : {r.loss, r.td, r.reg, r.rank_succ, r.rank_chain,
                     r.rank_fail, r.dqda_max, r.dqda_std}) {
      line += ",";
      csv_number(line, v);
    }
    line += "\n";
    f << line;
  }
}

}  // namespace o2o
