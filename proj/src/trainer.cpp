#include "o2o/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

#include "o2o/errors.hpp"

namespace o2o {

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void csv_number(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

std::string checkpoint_stem(std::uint64_t step) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08llu", static_cast<unsigned long long>(step));
  return std::string("ckpt_") + buf;
}

}  // namespace

EvalResult evaluate(const SquashedGaussianPolicy& policy, const PointMaze& env,
                    std::size_t n_episodes, std::uint64_t seed,
                    std::size_t workers) {
  if (n_episodes == 0) throw ConfigError("evaluate: need at least one episode");
  std::vector<double> success(n_episodes, 0.0), length(n_episodes, 0.0);

  auto run_episode = [&](std::size_t e) {
    PointMaze local = env;
    Rng rng = Rng::stream(seed, "eval-episode", e);
    std::vector<double> obs = local.reset(rng);
    Matrix state(1, obs.size());
    while (true) {
      std::copy(obs.begin(), obs.end(), state.row(0));
      Matrix a = policy.deterministic(state);
      StepResult res = local.step({a(0, 0), a(0, 1)});
      obs = res.next_state;
      length[e] += 1.0;
      if (res.terminated) {
        success[e] = 1.0;
        break;
      }
      if (res.truncated) break;
    }
  };

  workers = std::max<std::size_t>(1, std::min(workers, n_episodes));
  if (workers == 1) {
    for (std::size_t e = 0; e < n_episodes; ++e) run_episode(e);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (std::size_t e = w; e < n_episodes; e += workers) run_episode(e);
      });
    }
    for (auto& t : pool) t.join();
  }

  EvalResult out;
  for (std::size_t e = 0; e < n_episodes; ++e) {
    out.success_rate += success[e];
    out.mean_length += length[e];
  }
  out.success_rate /= static_cast<double>(n_episodes);
  out.mean_length /= static_cast<double>(n_episodes);
  return out;
}

void RunRecord::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("RunRecord: cannot open " + path);
  f << "step,phase,env_steps,grad_steps,success_rate,avg_traj_len,loss_total,"
       "td_loss,cql_reg,rank_succ,rank_chain,rank_fail,actor_loss,entropy,"
       "temperature,alpha,policy_data_gap,dqda_max,dqda_std,extra_critic_evals\n";
  std::string line;
  for (const RunRow& r : rows) {
    line.clear();
    line += std::to_string(r.step) + "," + r.phase + ",";
    line += std::to_string(r.env_steps) + "," + std::to_string(r.grad_steps);
    for (double v : {r.success_rate, r.avg_traj_len, r.loss_total, r.td,
                     r.cql_reg, r.rank_succ, r.rank_chain, r.rank_fail,
                     r.actor_loss, r.entropy, r.temperature, r.alpha,
                     r.policy_data_gap, r.dqda_max, r.dqda_std,
                     r.extra_critic_evals}) {
      line += ",";
      csv_number(line, v);
    }
    line += "\n";
    f << line;
  }
  if (!f) throw IoError("RunRecord: write failed for " + path);
}

void RunRecord::write_timing_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("RunRecord: cannot open " + path);
  f << "step,wall_seconds\n";
  std::string line;
  for (const RunRow& r : rows) {
    line = std::to_string(r.step) + ",";
    csv_number(line, r.wall_seconds);
    line += "\n";
    f << line;
  }
}

Trainer::Trainer(TrainConfig cfg, std::string out_dir)
    : cfg_(std::move(cfg)), out_dir_(std::move(out_dir)) {
  cfg_.validate();
  spec_ = algorithm_spec(cfg_.algorithm);
  env_ = PointMaze::named(cfg_.env);

  if (spec_.uses_offline_data) {
    offline_ = load_dataset(cfg_.dataset);
    if (offline_->empty())
      throw DataError("offline dataset " + cfg_.dataset + " holds no transitions");
    if (offline_->state_dim() != env_.observation_dim() ||
        offline_->action_dim() != env_.action_dim())
      throw DataError("dataset dimensions do not match environment '" + cfg_.env + "'");
    if (spec_.offline == CriticObjective::kRankq &&
        offline_->success_index().empty())
      throw DataError(
          "RankQ needs at least one success trajectory in the offline dataset "
          "(success partition is empty)");
  }

  if (spec_.fixed_half_mix) {
    effective_mixing_ = 0.5;
  } else if (spec_.pooled_buffer) {
    effective_mixing_ = -1.0;
  } else if (!spec_.uses_offline_data) {
    effective_mixing_ = 0.0;
  } else {
    effective_mixing_ = cfg_.mixing_ratio;
  }
  sampler_.emplace(offline_ ? &*offline_ : nullptr, effective_mixing_,
                   cfg_.replay_capacity);

  Rng init = Rng::stream(cfg_.seed, "init");
  pair_ = make_critic_pair(env_.observation_dim(), env_.action_dim(),
                           cfg_.critic_hidden, Activation::kRelu, init);
  policy_ = SquashedGaussianPolicy(env_.observation_dim(), env_.action_dim(),
                                   cfg_.actor_hidden, init);
  opt_q1_ = AdamState(pair_.q1, cfg_.critic_lr);
  opt_q2_ = AdamState(pair_.q2, cfg_.critic_lr);
  opt_actor_ = AdamState(policy_.trunk(), cfg_.actor_lr);
  temp_.auto_tune = cfg_.auto_entropy;
  temp_.target_entropy = cfg_.target_entropy != 0.0
                             ? cfg_.target_entropy
                             : -static_cast<double>(env_.action_dim());
  temp_.adam.lr = cfg_.temp_lr;
  opt_dual_.lr = cfg_.temp_lr;

  // Fixed probe batch for the dQ/da statistics.
  if (offline_ && !offline_->empty()) {
    Rng prng = Rng::stream(cfg_.seed, "probe");
    std::size_t n = std::min<std::size_t>(cfg_.probe_size, offline_->num_transitions());
    probe_states_ = Matrix(n, offline_->state_dim());
    for (std::size_t i = 0; i < n; ++i) {
      const auto& ref =
          offline_->all_index()[prng.uniform_index(offline_->num_transitions())];
      const Transition& t = offline_->at(ref);
      std::copy(t.state.begin(), t.state.end(), probe_states_.row(i));
    }
  }

  wall_start_ = now_seconds();
}

double Trainer::current_alpha() const {
  return cfg_.use_lagrange ? std::exp(log_alpha_dual_) : cfg_.alpha;
}

Batch Trainer::next_batch(Rng& rng) const {
  if (spec_.fixed_half_mix) return hybrid_sample(*sampler_, cfg_.batch_size, rng);
  return sampler_->sample(cfg_.batch_size, rng);
}

void Trainer::gradient_step(CriticObjective objective) {
  Rng rng = Rng::stream(cfg_.seed, "update", grad_steps_);
  Batch batch = next_batch(rng);

  CriticObjectiveConfig ocfg = cfg_.objective(objective);
  ocfg.alpha = current_alpha();
  PolicySampler sampler = policy_.sampler();

  CriticLossResult critic_res;
  switch (objective) {
    case CriticObjective::kTd:
      critic_res = td_loss(pair_, batch, sampler, ocfg.gamma, rng,
                           ocfg.n_target_action_samples, ocfg.target_value_floor);
      break;
    case CriticObjective::kCql:
    case CriticObjective::kCalql: {
      critic_res = td_loss(pair_, batch, sampler, ocfg.gamma, rng,
                           ocfg.n_target_action_samples, ocfg.target_value_floor);
      CriticLossResult reg =
          objective == CriticObjective::kCql
              ? cql_regularizer(pair_, batch, sampler, ocfg, rng)
              : calql_regularizer(pair_, batch, sampler, ocfg, rng);
      critic_res.total += reg.total;
      critic_res.comp.cql_reg = reg.comp.cql_reg;
      critic_res.comp.plain_policy_data_gap = reg.comp.plain_policy_data_gap;
      critic_res.comp.estimator_gap = reg.comp.estimator_gap;
      critic_res.grad_q1.add_scaled(reg.grad_q1, 1.0);
      critic_res.grad_q2.add_scaled(reg.grad_q2, 1.0);
      critic_res.extra_critic_evals = reg.extra_critic_evals;
      if (cfg_.use_lagrange) {
        // Dual ascent on alpha toward the target action gap.
        double alpha = current_alpha();
        double dual_grad =
            -alpha * (reg.comp.estimator_gap - cfg_.target_action_gap);
        opt_dual_.update(log_alpha_dual_, dual_grad);
        log_alpha_dual_ = std::clamp(log_alpha_dual_, -13.8, 13.8);
      }
      break;
    }
    case CriticObjective::kRankq:
      critic_res = rankq_loss(pair_, batch, sampler, ocfg, rng);
      break;
  }

  adam_step(pair_.q1, clip_global_norm(std::move(critic_res.grad_q1), cfg_.grad_clip), opt_q1_);
  adam_step(pair_.q2, clip_global_norm(std::move(critic_res.grad_q2), cfg_.grad_clip), opt_q2_);

  ActorLossResult actor_res =
      actor_loss(policy_, pair_, batch.states, temp_.temperature(), rng);
  adam_step(policy_.trunk(), clip_global_norm(std::move(actor_res.grad), cfg_.grad_clip),
            opt_actor_);
  temp_.update(actor_res.mean_log_prob);

  polyak_update(pair_, cfg_.tau);
  grad_steps_ += 1;

  window_.total += critic_res.total;
  window_.td += critic_res.comp.td;
  window_.reg += critic_res.comp.cql_reg;
  window_.succ += critic_res.comp.rank_succ;
  window_.chain += critic_res.comp.rank_chain;
  window_.fail += critic_res.comp.rank_fail;
  window_.gap += critic_res.comp.plain_policy_data_gap;
  window_.extra += critic_res.extra_critic_evals;
  window_.n += 1;
  window_.actor += actor_res.loss;
  window_.entropy += actor_res.entropy;
  window_.n_actor += 1;
}

void Trainer::dqda_probe_stats(double& max_abs, double& std_dev,
                               std::uint64_t index) {
  max_abs = 0.0;
  std_dev = 0.0;
  if (probe_states_.rows() == 0) {
    // Pure-online runs gain a probe once enough experience exists.
    if (sampler_->online_size() == 0) return;
    std::size_t n = std::min<std::size_t>(cfg_.probe_size, sampler_->online_size());
    probe_states_ = Matrix(n, env_.observation_dim());
    for (std::size_t i = 0; i < n; ++i) {
      const StoredTransition& st = sampler_->ring().at(i);
      std::copy(st.t.state.begin(), st.t.state.end(), probe_states_.row(i));
    }
  }
  Rng rng = Rng::stream(cfg_.seed, "probe-actions", index);
  PolicySample ps = policy_.sample(probe_states_, rng);
  Tape tape;
  Matrix q = q_values(pair_.q1, probe_states_, ps.actions, &tape);
  Matrix upstream(q.rows(), 1, 1.0);
  Matrix in_grad;
  pair_.q1.backward(tape, upstream, &in_grad);
  const std::size_t sdim = probe_states_.cols();
  const std::size_t adim = env_.action_dim();
  double sum = 0.0, sum2 = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < in_grad.rows(); ++i) {
    for (std::size_t j = 0; j < adim; ++j) {
      double g = std::abs(in_grad(i, sdim + j));
      max_abs = std::max(max_abs, g);
      sum += g;
      sum2 += g * g;
      ++count;
    }
  }
  if (count > 0) {
    double mean = sum / static_cast<double>(count);
    std_dev = std::sqrt(std::max(0.0, sum2 / static_cast<double>(count) - mean * mean));
  }
}

void Trainer::do_eval(const char* phase) {
  std::uint64_t eval_seed = splitmix64(cfg_.seed ^ fnv1a64("eval"));
  EvalResult ev = evaluate(policy_, env_, cfg_.eval_episodes,
                           eval_seed + eval_index_, cfg_.eval_workers);
  RunRow row;
  row.step = grad_steps_;
  row.phase = phase;
  row.env_steps = env_steps_;
  row.grad_steps = grad_steps_;
  row.success_rate = ev.success_rate;
  row.avg_traj_len = ev.mean_length;
  double n = window_.n > 0 ? static_cast<double>(window_.n) : 1.0;
  double na = window_.n_actor > 0 ? static_cast<double>(window_.n_actor) : 1.0;
  row.loss_total = window_.total / n;
  row.td = window_.td / n;
  row.cql_reg = window_.reg / n;
  row.rank_succ = window_.succ / n;
  row.rank_chain = window_.chain / n;
  row.rank_fail = window_.fail / n;
  row.actor_loss = window_.actor / na;
  row.entropy = window_.entropy / na;
  row.temperature = temp_.temperature();
  row.alpha = current_alpha();
  row.policy_data_gap = window_.gap / n;
  row.extra_critic_evals = window_.extra / n;
  dqda_probe_stats(row.dqda_max, row.dqda_std, eval_index_);
  row.wall_seconds = now_seconds() - wall_start_;
  record_.rows.push_back(std::move(row));
  window_.reset();
  eval_index_ += 1;

  if (!out_dir_.empty()) {
    std::string stem = out_dir_ + "/" + checkpoint_stem(grad_steps_);
    save_net(pair_.q1, stem + "_q1.net");
    save_net(pair_.q2, stem + "_q2.net");
    save_net(policy_.trunk(), stem + "_actor.net");
    save_checkpoint();
  }
}

void Trainer::run_offline() {
  if (cfg_.offline_steps == 0) return;
  if (!offline_)
    throw DataError("offline phase requested but the algorithm uses no dataset");
  while (grad_steps_ < cfg_.offline_steps) {
    gradient_step(spec_.offline);
    if (grad_steps_ % cfg_.eval_every == 0 || grad_steps_ == cfg_.offline_steps)
      do_eval("offline");
  }
}

void Trainer::push_finished_episode(std::vector<Transition> steps) {
  Trajectory traj;
  traj.steps = std::move(steps);
  for (const Transition& t : traj.steps)
    traj.success = traj.success || t.reward > 0.0;
  traj.return_to_go = compute_return_to_go(traj, cfg_.gamma);
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    StoredTransition st;
    st.t = traj.steps[i];
    st.return_to_go = traj.return_to_go[i];
    st.success = traj.success;
    sampler_->push_online(std::move(st));
  }
}

void Trainer::run_online() {
  if (cfg_.online_env_steps == 0) return;
  while (env_steps_ < cfg_.online_env_steps) {
    if (!episode_open_) {
      Rng erng = Rng::stream(cfg_.seed, "online-episode", episode_index_);
      episode_obs_ = env_.reset(erng);
      episode_steps_.clear();
      episode_open_ = true;
    }
    // Stochastic rollout action; the per-step stream keeps resume exact.
    Rng arng = Rng::stream(cfg_.seed, "online-action", env_steps_);
    Matrix state(1, episode_obs_.size());
    std::copy(episode_obs_.begin(), episode_obs_.end(), state.row(0));
    PolicySample ps = policy_.sample(state, arng);
    StepResult res = env_.step({ps.actions(0, 0), ps.actions(0, 1)});

    Transition t;
    t.state = episode_obs_;
    t.action = {ps.actions(0, 0), ps.actions(0, 1)};
    t.reward = res.reward;
    t.next_state = res.next_state;
    t.terminated = res.terminated;
    t.truncated = res.truncated;
    episode_steps_.push_back(std::move(t));
    episode_obs_ = res.next_state;
    env_steps_ += 1;

    if (res.terminated || res.truncated) {
      push_finished_episode(std::move(episode_steps_));
      episode_steps_.clear();
      episode_open_ = false;
      episode_index_ += 1;
    }

    if (sampler_->ready()) {
      for (std::uint64_t u = 0; u < cfg_.updates_per_env_step; ++u)
        gradient_step(spec_.online);
    }

    if (env_steps_ % cfg_.eval_every == 0 || env_steps_ == cfg_.online_env_steps)
      do_eval("online");
  }
}

void Trainer::write_artifacts() const {
  if (out_dir_.empty()) return;
  record_.write_csv(out_dir_ + "/record.csv");
  record_.write_timing_csv(out_dir_ + "/timing.csv");
}

namespace {

constexpr char kCkptMagic[8] = {'O', '2', 'O', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void wpod(std::ostream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void rpod(std::istream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
}

void wvec(std::ostream& f, const std::vector<double>& v) {
  wpod(f, static_cast<std::uint64_t>(v.size()));
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> rvec(std::istream& f) {
  std::uint64_t n = 0;
  rpod(f, n);
  std::vector<double> v(n);
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(n * sizeof(double)));
  return v;
}

void wmat(std::ostream& f, const Matrix& m) {
  wpod(f, static_cast<std::uint64_t>(m.rows()));
  wpod(f, static_cast<std::uint64_t>(m.cols()));
  f.write(reinterpret_cast<const char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
}

Matrix rmat(std::istream& f) {
  std::uint64_t r = 0, c = 0;
  rpod(f, r);
  rpod(f, c);
  Matrix m(r, c);
  f.read(reinterpret_cast<char*>(m.data()),
         static_cast<std::streamsize>(m.size() * sizeof(double)));
  return m;
}

void wadam(std::ostream& f, const AdamState& st) {
  wpod(f, st.lr);
  wpod(f, st.step);
  for (const auto& group : {st.mw, st.vw, st.mb, st.vb}) {
    wpod(f, static_cast<std::uint64_t>(group.size()));
    for (const auto& m : group) wmat(f, m);
  }
}

void radam(std::istream& f, AdamState& st) {
  rpod(f, st.lr);
  rpod(f, st.step);
  for (auto* group : {&st.mw, &st.vw, &st.mb, &st.vb}) {
    std::uint64_t n = 0;
    rpod(f, n);
    group->clear();
    for (std::uint64_t i = 0; i < n; ++i) group->push_back(rmat(f));
  }
}

void wscalar_adam(std::ostream& f, const ScalarAdam& a) {
  wpod(f, a.lr);
  wpod(f, a.step);
  wpod(f, a.m);
  wpod(f, a.v);
}

void rscalar_adam(std::istream& f, ScalarAdam& a) {
  rpod(f, a.lr);
  rpod(f, a.step);
  rpod(f, a.m);
  rpod(f, a.v);
}

void wtransition(std::ostream& f, const Transition& t) {
  wvec(f, t.state);
  wvec(f, t.action);
  wpod(f, t.reward);
  wvec(f, t.next_state);
  std::uint8_t flags = (t.terminated ? 1 : 0) | (t.truncated ? 2 : 0);
  wpod(f, flags);
}

Transition rtransition(std::istream& f) {
  Transition t;
  t.state = rvec(f);
  t.action = rvec(f);
  rpod(f, t.reward);
  t.next_state = rvec(f);
  std::uint8_t flags = 0;
  rpod(f, flags);
  t.terminated = flags & 1;
  t.truncated = flags & 2;
  return t;
}

}  // namespace

void Trainer::save_checkpoint() const {
  if (out_dir_.empty()) return;
  std::string tmp = out_dir_ + "/last.ckpt.tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("save_checkpoint: cannot open " + tmp);
    f.write(kCkptMagic, sizeof(kCkptMagic));
    wpod(f, grad_steps_);
    wpod(f, env_steps_);
    wpod(f, episode_index_);
    wpod(f, eval_index_);
    write_net(f, pair_.q1);
    write_net(f, pair_.q2);
    write_net(f, pair_.target1);
    write_net(f, pair_.target2);
    write_net(f, policy_.trunk());
    wadam(f, opt_q1_);
    wadam(f, opt_q2_);
    wadam(f, opt_actor_);
    wpod(f, temp_.log_temp);
    wscalar_adam(f, temp_.adam);
    wpod(f, log_alpha_dual_);
    wscalar_adam(f, opt_dual_);

    // Online experience (only rows pushed online; the offline preload of a
    // pooled sampler is reconstructed from the dataset on resume).
    const ReplayRing& ring = sampler_->ring();
    std::uint64_t n_online = 0;
    for (std::size_t i = 0; i < ring.size(); ++i)
      if (ring.at(i).online) ++n_online;
    wpod(f, n_online);
    for (std::size_t i = 0; i < ring.size(); ++i) {
      const StoredTransition& st = ring.at(i);
      if (!st.online) continue;
      wtransition(f, st.t);
      wpod(f, st.return_to_go);
      std::uint8_t succ = st.success ? 1 : 0;
      wpod(f, succ);
    }

    // Live episode.
    std::uint8_t open = episode_open_ ? 1 : 0;
    wpod(f, open);
    if (episode_open_) {
      wvec(f, episode_obs_);
      auto pos = env_.position();
      auto vel = env_.velocity();
      wpod(f, pos[0]);
      wpod(f, pos[1]);
      wpod(f, vel[0]);
      wpod(f, vel[1]);
      std::uint64_t steps = env_.steps_taken();
      wpod(f, steps);
      wpod(f, static_cast<std::uint64_t>(episode_steps_.size()));
      for (const Transition& t : episode_steps_) wtransition(f, t);
    }

    // Record rows so the CSV stays complete across resumes.
    wpod(f, static_cast<std::uint64_t>(record_.rows.size()));
    for (const RunRow& r : record_.rows) {
      wpod(f, r.step);
      std::uint8_t phase = r.phase == "offline" ? 0 : 1;
      wpod(f, phase);
      wpod(f, r.env_steps);
      wpod(f, r.grad_steps);
      for (double v : {r.success_rate, r.avg_traj_len, r.loss_total, r.td,
                       r.cql_reg, r.rank_succ, r.rank_chain, r.rank_fail,
                       r.actor_loss, r.entropy, r.temperature, r.alpha,
                       r.policy_data_gap, r.dqda_max, r.dqda_std,
                       r.extra_critic_evals, r.wall_seconds})
        wpod(f, v);
    }
    wmat(f, probe_states_);
    if (!f) throw IoError("save_checkpoint: write failed");
  }
  std::filesystem::rename(tmp, out_dir_ + "/last.ckpt");
}

bool Trainer::resume_from(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return false;
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
    throw IoError("resume: " + path + " is not a trainer checkpoint");
  rpod(f, grad_steps_);
  rpod(f, env_steps_);
  rpod(f, episode_index_);
  rpod(f, eval_index_);
  pair_.q1 = read_net(f);
  pair_.q2 = read_net(f);
  pair_.target1 = read_net(f);
  pair_.target2 = read_net(f);
  policy_.trunk() = read_net(f);
  radam(f, opt_q1_);
  radam(f, opt_q2_);
  radam(f, opt_actor_);
  rpod(f, temp_.log_temp);
  rscalar_adam(f, temp_.adam);
  rpod(f, log_alpha_dual_);
  rscalar_adam(f, opt_dual_);

  sampler_.emplace(offline_ ? &*offline_ : nullptr, effective_mixing_,
                   cfg_.replay_capacity);
  std::uint64_t n_online = 0;
  rpod(f, n_online);
  for (std::uint64_t i = 0; i < n_online; ++i) {
    StoredTransition st;
    st.t = rtransition(f);
    rpod(f, st.return_to_go);
    std::uint8_t succ = 0;
    rpod(f, succ);
    st.success = succ != 0;
    sampler_->push_online(std::move(st));
  }

  std::uint8_t open = 0;
  rpod(f, open);
  episode_open_ = open != 0;
  episode_steps_.clear();
  if (episode_open_) {
    episode_obs_ = rvec(f);
    double x, y, vx, vy;
    std::uint64_t steps = 0;
    rpod(f, x);
    rpod(f, y);
    rpod(f, vx);
    rpod(f, vy);
    rpod(f, steps);
    env_.restore(x, y, vx, vy, static_cast<std::size_t>(steps));
    std::uint64_t n = 0;
    rpod(f, n);
    for (std::uint64_t i = 0; i < n; ++i) episode_steps_.push_back(rtransition(f));
  }

  std::uint64_t n_rows = 0;
  rpod(f, n_rows);
  record_.rows.clear();
  for (std::uint64_t i = 0; i < n_rows; ++i) {
    RunRow r;
    rpod(f, r.step);
    std::uint8_t phase = 0;
    rpod(f, phase);
    r.phase = phase == 0 ? "offline" : "online";
    rpod(f, r.env_steps);
    rpod(f, r.grad_steps);
    for (double* v : {&r.success_rate, &r.avg_traj_len, &r.loss_total, &r.td,
                      &r.cql_reg, &r.rank_succ, &r.rank_chain, &r.rank_fail,
                      &r.actor_loss, &r.entropy, &r.temperature, &r.alpha,
                      &r.policy_data_gap, &r.dqda_max, &r.dqda_std,
                      &r.extra_critic_evals, &r.wall_seconds})
      rpod(f, *v);
    record_.rows.push_back(std::move(r));
  }
  probe_states_ = rmat(f);
  if (!f) throw IoError("resume: truncated checkpoint " + path);
  return true;
}

RunRecord run_training(const TrainConfig& cfg, const std::string& out_dir,
                       bool resume) {
  Trainer trainer(cfg, out_dir);
  if (resume && !out_dir.empty()) trainer.resume_from(out_dir + "/last.ckpt");
  trainer.run_offline();
  trainer.run_online();
  trainer.write_artifacts();
  return trainer.record();
}

}  // namespace o2o
