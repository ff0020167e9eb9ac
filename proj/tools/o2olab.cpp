// o2olab: dataset generation, training, evaluation, toy landscape study,
// and Q-landscape analysis for the offline-to-online RL lab.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "o2o/analysis.hpp"
#include "o2o/config.hpp"
#include "o2o/errors.hpp"
#include "o2o/toy.hpp"
#include "o2o/trainer.hpp"

namespace fs = std::filesystem;
using namespace o2o;

namespace {

int exit_code_for(const std::string& category) {
  if (category == "config") return 2;
  if (category == "data") return 3;
  if (category == "io") return 4;
  if (category == "numeric") return 5;
  if (category == "shape") return 6;
  if (category == "state") return 7;
  return 1;
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir);
}

int cmd_gen_data(const std::string& env_id, const std::string& mode,
                 std::size_t episodes, std::uint64_t seed, double noise,
                 double random_fraction, double offgoal_fraction,
                 const std::string& out) {
  PointMaze env = PointMaze::named(env_id);
  ScriptedCollector collector;
  collector.mode = mode == "diverse" ? CollectorMode::kDiverse : CollectorMode::kPlay;
  if (mode != "play" && mode != "diverse")
    throw ConfigError("collector mode must be play or diverse");
  collector.action_noise = noise;
  collector.random_fraction = random_fraction;
  collector.offgoal_fraction = offgoal_fraction;

  ScriptedCollector::MixTally tally;
  auto trajs = collect_trajectories(env, collector, episodes, seed, &tally);
  OfflineDataset ds(std::move(trajs), 0.99);
  save_dataset(ds, out);

  std::size_t succ = 0;
  for (const auto& t : ds.trajectories()) succ += t.success ? 1 : 0;
  std::printf("wrote %s\n", out.c_str());
  std::printf("episodes:          %zu\n", ds.num_trajectories());
  std::printf("transitions:       %zu\n", ds.num_transitions());
  std::printf("success fraction:  %.3f\n",
              static_cast<double>(succ) / static_cast<double>(ds.num_trajectories()));
  std::printf("success rows:      %zu\n", ds.success_index().size());
  std::printf("failure rows:      %zu\n", ds.failure_index().size());
  if (collector.mode == CollectorMode::kDiverse)
    std::printf("episode mix:       goal=%zu wander=%zu random=%zu\n",
                tally.goal_directed, tally.wander, tally.random);
  return 0;
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& overrides, const std::string& out,
              bool resume) {
  ensure_out_dir(out);
  TrainConfig cfg = load_train_config(config_path, overrides);
  RunRecord record = run_training(cfg, out, resume);
  std::printf("wrote %s/record.csv (%zu eval rows)\n", out.c_str(),
              record.rows.size());
  if (!record.rows.empty()) {
    const RunRow& last = record.rows.back();
    std::printf("final: phase=%s step=%llu success=%.3f avg_len=%.1f\n",
                last.phase.c_str(), static_cast<unsigned long long>(last.step),
                last.success_rate, last.avg_traj_len);
  }
  return 0;
}

int cmd_eval(const std::string& actor_path, const std::string& env_id,
             std::size_t episodes, std::uint64_t seed, std::size_t workers) {
  PointMaze env = PointMaze::named(env_id);
  Rng scratch(0);
  SquashedGaussianPolicy policy(env.observation_dim(), env.action_dim(), {8}, scratch);
  policy.trunk() = load_net(actor_path);
  if (policy.trunk().input_dim() != env.observation_dim() ||
      policy.trunk().output_dim() != 2 * env.action_dim())
    throw DataError("actor checkpoint does not match environment dimensions");
  EvalResult res = evaluate(policy, env, episodes, seed, workers);
  std::printf("episodes:       %zu\n", episodes);
  std::printf("success rate:   %.3f\n", res.success_rate);
  std::printf("avg trajectory: %.1f steps (failure-inclusive)\n", res.mean_length);
  return 0;
}

int cmd_toy(const ToyConfig& cfg, const std::string& out) {
  ensure_out_dir(out);
  ToyResult result = train_toy_critic(cfg);

  GradField field = grad_field(result.critic, {}, 41);
  double radius = cfg.disc_radius;
  auto paths = ascent_paths(result.critic, {}, ring_starts(), 0.05, 200,
                            [radius](double a0, double a1) {
                              return a0 * a0 + a1 * a1 <= radius * radius;
                            });
  std::size_t converged = 0;
  for (const auto& p : paths) converged += p.converged ? 1 : 0;

  write_field_csv(field, out + "/field.csv");
  write_paths_csv(paths, out + "/paths.csv");
  write_toy_stats_csv(result.stats, out + "/stats.csv");
  render_field_svg(field, paths, cfg.disc_radius, out + "/landscape.svg");
  std::vector<DqdaStats> series;
  for (const auto& row : result.stats) series.push_back({row.dqda_max, row.dqda_std});
  render_dqda_svg(series, out + "/dqda.svg");

  double dqda_peak = 0.0;
  for (const auto& row : result.stats) dqda_peak = std::max(dqda_peak, row.dqda_max);
  std::printf("objective:        %s\n", cfg.objective.c_str());
  std::printf("iters:            %llu\n", static_cast<unsigned long long>(cfg.iters));
  std::printf("converged paths:  %zu / %zu\n", converged, paths.size());
  std::printf("dqda peak (max):  %.4g\n", dqda_peak);
  std::printf("q range:          [%.4g, %.4g]\n", field.q_min, field.q_max);
  std::printf("artifacts:        %s/{field,paths,stats}.csv, landscape.svg, dqda.svg\n",
              out.c_str());
  return 0;
}

int cmd_analyze(const std::string& critic_path, const std::string& ckpt_dir,
                const std::string& dataset_path, double holdout_fraction,
                double sigma, std::uint64_t seed, const std::string& state_csv,
                const std::string& out) {
  ensure_out_dir(out);
  OfflineDataset ds = load_dataset(dataset_path);
  auto [train_ds, holdout] = ds.split_trajectories(holdout_fraction, seed);
  const OfflineDataset& acc_ds = holdout_fraction > 0.0 ? holdout : ds;

  Mlp critic = load_net(critic_path);

  // Probe batch for dQ/da statistics: dataset states with dataset actions.
  Rng prng = Rng::stream(seed, "analyze-probe");
  std::size_t n = std::min<std::size_t>(512, ds.num_transitions());
  Matrix probe_s(n, ds.state_dim()), probe_a(n, ds.action_dim());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ref = ds.all_index()[prng.uniform_index(ds.num_transitions())];
    const Transition& t = ds.at(ref);
    std::copy(t.state.begin(), t.state.end(), probe_s.row(i));
    std::copy(t.action.begin(), t.action.end(), probe_a.row(i));
  }

  // Ranking accuracies over held-out success rows.
  auto [succ_s, succ_a] = success_rows(acc_ds);
  RankingAccuracies acc = ranking_accuracy(critic, succ_s, succ_a, sigma, seed);
  write_accuracy_csv(acc, out + "/accuracy.csv");
  std::printf("ranking accuracy: noisy=%.3f very_noisy=%.3f random=%.3f permuted=%.3f\n",
              acc.noisy, acc.very_noisy, acc.random, acc.permuted);

  DqdaStats stats = dqda_stats(critic, probe_s, probe_a);
  std::printf("dqda: max=%.4g std=%.4g\n", stats.max_abs, stats.std_dev);

  // Gradient field at a probe state (2-D action spaces only).
  std::vector<double> state(ds.state_dim(), 0.0);
  if (!state_csv.empty()) {
    state.clear();
    std::string item;
    std::stringstream ss(state_csv);
    while (std::getline(ss, item, ',')) state.push_back(std::stod(item));
    if (state.size() != ds.state_dim())
      throw ConfigError("--state must list exactly state_dim values");
  } else if (ds.num_transitions() > 0) {
    state = ds.at(ds.all_index()[0]).state;
  }
  if (ds.action_dim() == 2) {
    GradField field = grad_field(critic, state, 41);
    write_field_csv(field, out + "/field.csv");
    render_field_svg(field, {}, 0.0, out + "/field.svg");
  } else {
    std::printf("action space is %zu-D; field plot skipped (stats still written)\n",
                ds.action_dim());
  }

  // Checkpoint series, if a directory of q1 nets was given.
  if (!ckpt_dir.empty()) {
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(ckpt_dir)) {
      std::string name = entry.path().filename().string();
      if (name.starts_with("ckpt_") && name.ends_with("_q1.net"))
        paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (!paths.empty()) {
      auto series = dqda_over_training(paths, probe_s, probe_a);
      std::vector<std::string> labels;
      for (const auto& p : paths) labels.push_back(fs::path(p).filename().string());
      write_dqda_csv(labels, series, out + "/dqda_series.csv");
      render_dqda_svg(series, out + "/dqda_series.svg");
      std::printf("dqda series over %zu checkpoints written\n", paths.size());
    }
  }
  std::printf("artifacts under %s\n", out.c_str());
  return 0;
}

int cmd_export_csv(const std::string& dataset_path, const std::string& out) {
  OfflineDataset ds = load_dataset(dataset_path);
  export_dataset_csv(ds, out);
  std::printf("wrote %s (%zu transitions)\n", out.c_str(), ds.num_transitions());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"offline-to-online RL laboratory (TD / CQL / Cal-QL / RankQ)"};
  app.require_subcommand(1);

  // gen-data
  std::string gd_env = "maze-medium", gd_mode = "play", gd_out = "dataset.o2o";
  std::size_t gd_episodes = 200;
  std::uint64_t gd_seed = 0;
  double gd_noise = 0.3, gd_random_fraction = 0.4, gd_offgoal = 0.25;
  auto* gen = app.add_subcommand("gen-data", "collect an offline dataset with a scripted policy");
  gen->add_option("--env", gd_env, "maze-medium, maze-large, or a grid file");
  gen->add_option("--mode", gd_mode, "play (goal-directed) or diverse (mixed)");
  gen->add_option("--episodes", gd_episodes, "number of episodes");
  gen->add_option("--seed", gd_seed, "collection seed");
  gen->add_option("--noise", gd_noise, "action noise scale");
  gen->add_option("--random-fraction", gd_random_fraction,
                  "diverse mode: fraction of uniform-random episodes");
  gen->add_option("--offgoal-fraction", gd_offgoal,
                  "play mode: fraction of demonstrations to other cells");
  gen->add_option("--out", gd_out, "output .o2o file")->required();

  // train
  std::string tr_config, tr_out = "run";
  std::vector<std::string> tr_overrides;
  bool tr_resume = false;
  auto* train = app.add_subcommand("train", "offline pretraining followed by online fine-tuning");
  train->add_option("--config", tr_config, "key = value config file")->required();
  train->add_option("--set", tr_overrides, "config overrides, e.g. --set seed=3")
      ->take_all();
  train->add_option("--out", tr_out, "output directory (record.csv, checkpoints)");
  train->add_flag("--resume", tr_resume, "continue from <out>/last.ckpt");
  train->footer("config keys (defaults in brackets):\n" + config_key_help());

  // eval
  std::string ev_actor, ev_env = "maze-medium";
  std::size_t ev_episodes = 20, ev_workers = 1;
  std::uint64_t ev_seed = 0;
  auto* ev = app.add_subcommand("eval", "roll out a saved actor in deterministic mode");
  ev->add_option("--actor", ev_actor, "actor .net checkpoint")->required();
  ev->add_option("--env", ev_env, "environment id");
  ev->add_option("--episodes", ev_episodes, "evaluation episodes");
  ev->add_option("--seed", ev_seed, "evaluation seed");
  ev->add_option("--eval-workers", ev_workers, "episode worker threads");

  // toy
  ToyConfig toy_cfg;
  std::string toy_out = "toy_out";
  auto* toy = app.add_subcommand("toy", "disc-task landscape study for one critic objective");
  toy->add_option("--objective", toy_cfg.objective, "td, cql, calql or rankq");
  toy->add_option("--iters", toy_cfg.iters, "training iterations");
  toy->add_option("--seed", toy_cfg.seed, "seed");
  toy->add_option("--alpha", toy_cfg.alpha, "cql/calql weight");
  toy->add_option("--alpha0", toy_cfg.alpha0, "rankq success weight");
  toy->add_option("--alpha1", toy_cfg.alpha1, "rankq failure weight");
  toy->add_option("--sigma", toy_cfg.sigma, "noisy-action scale");
  toy->add_option("--lr", toy_cfg.lr, "critic learning rate");
  toy->add_option("--batch-size", toy_cfg.batch_size, "mini-batch size");
  toy->add_option("--grad-clip", toy_cfg.grad_clip, "global gradient norm clip");
  toy->add_option("--probe-size", toy_cfg.probe_size, "dQ/da probe batch size");
  toy->add_flag("--double-sigma", toy_cfg.ablate_double_sigma, "ablation: double sigma");
  toy->add_flag("--no-permuted", toy_cfg.ablate_no_permuted, "ablation: drop permuted pair");
  toy->add_flag("--no-chain", toy_cfg.ablate_no_chain, "ablation: drop chain terms");
  toy->add_option("--fail-pair", toy_cfg.fail_pair, "failure comparator: random or noisy");
  toy->add_option("--out", toy_out, "output directory");

  // analyze
  std::string an_critic, an_ckpt_dir, an_dataset, an_state, an_out = "analysis";
  double an_holdout = 0.1, an_sigma = 0.15;
  std::uint64_t an_seed = 0;
  auto* an = app.add_subcommand("analyze", "Q-landscape diagnostics for a saved critic");
  an->add_option("--critic", an_critic, "q1 .net checkpoint")->required();
  an->add_option("--checkpoint-dir", an_ckpt_dir, "directory of ckpt_*_q1.net files");
  an->add_option("--dataset", an_dataset, "offline .o2o dataset")->required();
  an->add_option("--holdout-fraction", an_holdout, "trajectory fraction held out for accuracy");
  an->add_option("--sigma", an_sigma, "noisy-action scale for accuracies");
  an->add_option("--seed", an_seed, "seed for negatives and probes");
  an->add_option("--state", an_state, "comma-separated probe state for the field plot");
  an->add_option("--out", an_out, "output directory");

  // export-csv
  std::string ex_dataset, ex_out = "dataset.csv";
  auto* ex = app.add_subcommand("export-csv", "dump a dataset as one CSV row per transition");
  ex->add_option("--dataset", ex_dataset, "input .o2o file")->required();
  ex->add_option("--out", ex_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_data(gd_env, gd_mode, gd_episodes, gd_seed, gd_noise,
                          gd_random_fraction, gd_offgoal, gd_out);
    if (train->parsed()) return cmd_train(tr_config, tr_overrides, tr_out, tr_resume);
    if (ev->parsed()) return cmd_eval(ev_actor, ev_env, ev_episodes, ev_seed, ev_workers);
    if (toy->parsed()) return cmd_toy(toy_cfg, toy_out);
    if (an->parsed())
      return cmd_analyze(an_critic, an_ckpt_dir, an_dataset, an_holdout,
                         an_sigma, an_seed, an_state, an_out);
    if (ex->parsed()) return cmd_export_csv(ex_dataset, ex_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", e.category().c_str(), e.what());
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error [internal]: %s\n", e.what());
    return 1;
  }
  return 1;
}
