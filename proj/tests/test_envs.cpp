#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "o2o/envs.hpp"
#include "o2o/errors.hpp"

using namespace o2o;

TEST_SUITE_BEGIN("envs");

TEST_CASE("toy dataset: success draws live in the disc with reward 1") {
  ToyDiscTask task;
  OfflineDataset ds = toy_sample_dataset(task, 1, 1, 5);
  const auto& succ = ds.trajectories()[0].steps[0];
  double n2 = succ.action[0] * succ.action[0] + succ.action[1] * succ.action[1];
  CHECK(n2 <= task.success_radius * task.success_radius);
  CHECK(succ.reward == 1.0);
}

TEST_CASE("toy dataset: failure draws are outside the disc and to the right") {
  ToyDiscTask task;
  OfflineDataset ds = toy_sample_dataset(task, 1, 1, 6);
  const auto& fail = ds.trajectories()[1].steps[0];
  double n2 = fail.action[0] * fail.action[0] + fail.action[1] * fail.action[1];
  CHECK(n2 > task.success_radius * task.success_radius);
  CHECK(fail.action[0] > 0.0);
  CHECK(fail.reward == 0.0);
}

TEST_CASE("toy dataset: the success predicate holds over 10k draws") {
  ToyDiscTask task;
  OfflineDataset ds = toy_sample_dataset(task, 10000, 10000, 7);
  std::size_t ok = 0;
  for (const auto& traj : ds.trajectories()) {
    const auto& t = traj.steps[0];
    bool inside = task.inside(t.action[0], t.action[1]);
    if (traj.success ? inside : (!inside && t.action[0] > 0.0)) ++ok;
  }
  CHECK(ok == 20000);
}

TEST_CASE("toy dataset: degenerate radius is rejected") {
  ToyDiscTask task;
  task.success_radius = 1.0;
  CHECK_THROWS_AS(toy_sample_dataset(task, 1, 1, 8), ConfigError);
}

TEST_CASE("maze grid validation") {
  // too few rows
  CHECK_THROWS_AS(PointMaze::from_grid({"###", "###"}, 10), DataError);
  // ragged rows
  CHECK_THROWS_AS(PointMaze::from_grid({"####", "#GS#", "##"}, 10), DataError);
  // open border
  CHECK_THROWS_AS(PointMaze::from_grid({"###", "#G#", "#S#", ".##"}, 10), DataError);
  // no goal
  CHECK_THROWS_AS(PointMaze::from_grid({"####", "#.S#", "####"}, 10), DataError);
  // no start
  CHECK_THROWS_AS(PointMaze::from_grid({"####", "#.G#", "####"}, 10), DataError);
  // unknown character
  CHECK_THROWS_AS(PointMaze::from_grid({"####", "#xG#", "####"}, 10), DataError);
  PointMaze ok = PointMaze::from_grid({"####", "#GS#", "####"}, 10);
  CHECK(ok.width() == 4);
  CHECK(ok.height() == 3);
}

TEST_CASE("maze step: zero action and zero velocity stay put") {
  PointMaze env = PointMaze::named("maze-medium");
  Rng rng(1);
  env.reset(rng);
  auto before = env.position();
  env.step({0.0, 0.0});
  auto after = env.position();
  CHECK(after[0] == before[0]);
  CHECK(after[1] == before[1]);
}

TEST_CASE("maze step: standing at the goal center terminates with reward 1") {
  PointMaze env = PointMaze::named("maze-medium");
  Rng rng(2);
  env.reset(rng);
  auto goal = env.goal();
  env.teleport(goal[0], goal[1], 0.0, 0.0);
  StepResult res = env.step({0.0, 0.0});
  CHECK(res.reward == 1.0);
  CHECK(res.terminated);
}

TEST_CASE("maze step: driving into a wall zeroes the normal velocity") {
  // Hand-placed wall to the left of the start cell.
  PointMaze env = PointMaze::from_grid({"#####", "#S.G#", "#####"}, 50);
  Rng rng(3);
  env.reset(rng);
  env.teleport(1.2, 1.5, 0.0, 0.0);
  // Push left with full force; x may shrink until the wall face, never below.
  for (int i = 0; i < 40; ++i) env.step({-1.0, 0.0});
  auto pos = env.position();
  auto vel = env.velocity();
  CHECK(pos[0] >= 1.0);       // still outside the wall cell
  CHECK(vel[0] == 0.0);       // normal component zeroed
  CHECK(pos[1] == doctest::Approx(1.5));
}

TEST_CASE("maze: velocity stays below the closed-form cap") {
  PointMaze env = PointMaze::named("maze-medium");
  Rng rng(4);
  env.reset(rng);
  double cap = env.velocity_cap() + 1e-12;
  for (int i = 0; i < 500; ++i) {
    auto res = env.step({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    auto vel = env.velocity();
    CHECK(std::abs(vel[0]) <= cap);
    CHECK(std::abs(vel[1]) <= cap);
    if (res.terminated || res.truncated) env.reset(rng);
  }
}

TEST_CASE("maze: reward 1 exactly when inside the goal radius") {
  PointMaze env = PointMaze::named("maze-medium");
  Rng rng(5);
  env.reset(rng);
  auto goal = env.goal();
  for (int i = 0; i < 200; ++i) {
    double dx = rng.uniform(-1.0, 1.0), dy = rng.uniform(-1.0, 1.0);
    env.teleport(goal[0] + dx, goal[1] + dy, 0.0, 0.0);
    StepResult res = env.step({0.0, 0.0});
    auto pos = env.position();
    double dist = std::hypot(pos[0] - goal[0], pos[1] - goal[1]);
    CHECK((res.reward == 1.0) == (dist <= env.goal_radius()));
    env.reset(rng);
  }
}

TEST_CASE("maze: medium layout needs at least 60 steps of optimal driving") {
  PointMaze env = PointMaze::named("maze-medium");
  Rng rng(6);
  env.reset(rng);
  ScriptedCollector noiseless;
  noiseless.action_noise = 0.0;
  noiseless.offgoal_fraction = 0.0;
  auto trajs = collect_trajectories(env, noiseless, 5, 123);
  for (const auto& traj : trajs) {
    CHECK(traj.success);
    CHECK(traj.length() >= 60);
  }
}

TEST_CASE("collector: noiseless play solves a straight-line layout") {
  PointMaze env = PointMaze::from_grid({"#####", "#S.G#", "#####"}, 60);
  ScriptedCollector collector;
  collector.action_noise = 0.0;
  collector.offgoal_fraction = 0.0;
  auto trajs = collect_trajectories(env, collector, 3, 9);
  for (const auto& traj : trajs) CHECK(traj.success);
}

TEST_CASE("collector: uniform-random actions rarely solve the large maze") {
  PointMaze env = PointMaze::named("maze-large");
  ScriptedCollector collector;
  collector.mode = CollectorMode::kDiverse;
  collector.random_fraction = 1.0;  // every episode random
  auto trajs = collect_trajectories(env, collector, 100, 10);
  std::size_t succ = 0;
  for (const auto& traj : trajs) succ += traj.success ? 1 : 0;
  CHECK(static_cast<double>(succ) / 100.0 < 0.2);
}

TEST_CASE("collector: the same seed reproduces the dataset byte for byte") {
  PointMaze env = PointMaze::named("maze-medium");
  ScriptedCollector collector;
  auto a = collect_trajectories(env, collector, 10, 77);
  auto b = collect_trajectories(env, collector, 10, 77);
  OfflineDataset da(std::move(a), 0.99), db(std::move(b), 0.99);
  save_dataset(da, "test_env_a.o2o");
  save_dataset(db, "test_env_b.o2o");
  std::ifstream fa("test_env_a.o2o", std::ios::binary);
  std::ifstream fb("test_env_b.o2o", std::ios::binary);
  std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(ba == bb);
  CHECK(!ba.empty());
  std::remove("test_env_a.o2o");
  std::remove("test_env_b.o2o");
}

TEST_CASE("collector: play mode on the medium maze mostly succeeds") {
  PointMaze env = PointMaze::named("maze-medium");
  ScriptedCollector collector;  // default noise
  auto trajs = collect_trajectories(env, collector, 50, 11);
  std::size_t succ = 0;
  for (const auto& traj : trajs) succ += traj.success ? 1 : 0;
  CHECK(static_cast<double>(succ) / 50.0 >= 0.5);
}

TEST_CASE("maze layouts load from plain-text files") {
  std::string path = "test_layout.txt";
  {
    std::ofstream f(path);
    f << "#####\n#S.G#\n#####\n";
  }
  PointMaze env = PointMaze::named(path);
  CHECK(env.width() == 5);
  std::remove(path.c_str());
  CHECK_THROWS_AS(PointMaze::named("no-such-maze"), IoError);
}

TEST_SUITE_END();
