#include "o2o/envs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>

#include "o2o/errors.hpp"

namespace o2o {

OfflineDataset toy_sample_dataset(const ToyDiscTask& task, std::size_t n_succ,
                                  std::size_t n_fail, std::uint64_t seed) {
  if (task.success_radius <= 0.0 || task.success_radius >= 1.0)
    throw ConfigError("toy_sample_dataset: success radius must be in (0, 1)");
  if (n_succ == 0 || n_fail == 0)
    throw ConfigError("toy_sample_dataset: sample counts must be > 0");

  Rng rng = Rng::stream(seed, "toy-data");
  std::vector<Trajectory> trajectories;
  trajectories.reserve(n_succ + n_fail);

  auto push = [&](double a0, double a1, double reward) {
    Transition t;
    t.action = {a0, a1};
    t.reward = reward;
    t.terminated = true;
    Trajectory traj;
    traj.steps.push_back(std::move(t));
    trajectories.push_back(std::move(traj));
  };

  for (std::size_t i = 0; i < n_succ; ++i) {
    // Uniform in the disc via the polar transform.
    double r = task.success_radius * std::sqrt(rng.uniform());
    double th = 2.0 * M_PI * rng.uniform();
    push(r * std::cos(th), r * std::sin(th), 1.0);
  }
  for (std::size_t i = 0; i < n_fail; ++i) {
    // Outside the disc and to the right of it (a0 > 0).
    double a0, a1;
    do {
      a0 = rng.uniform(0.0, 1.0);
      a1 = rng.uniform(-1.0, 1.0);
    } while (task.inside(a0, a1) || a0 == 0.0);
    push(a0, a1, 0.0);
  }
  return OfflineDataset(std::move(trajectories), 0.99);
}

static const std::vector<std::string> kMazeMedium = {
    "########",
    "#S.....#",
    "#......#",
    "######.#",
    "#......#",
    "#G.....#",
    "#......#",
    "########",
};

PointMaze PointMaze::from_grid(const std::vector<std::string>& rows,
                               std::size_t max_steps) {
  PointMaze m;
  if (rows.size() < 3) throw DataError("maze grid: too few rows");
  m.height_ = rows.size();
  m.width_ = rows.front().size();
  if (m.width_ < 3) throw DataError("maze grid: too few columns");
  bool have_goal = false;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.width_)
      throw DataError("maze grid: row " + std::to_string(r) + " has wrong length");
    for (std::size_t c = 0; c < m.width_; ++c) {
      char ch = rows[r][c];
      if (ch != '#' && ch != '.' && ch != 'G' && ch != 'S')
        throw DataError(std::string("maze grid: unknown character '") + ch + "'");
      bool border = r == 0 || c == 0 || r + 1 == rows.size() || c + 1 == m.width_;
      if (border && ch != '#')
        throw DataError("maze grid: border must be walls");
      if (ch == 'G') {
        if (have_goal) throw DataError("maze grid: more than one goal cell");
        have_goal = true;
        m.goal_ = {static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5};
      }
      if (ch == 'S') m.start_cells_.push_back({c, r});
    }
  }
  if (!have_goal) throw DataError("maze grid: no goal cell");
  if (m.start_cells_.empty()) throw DataError("maze grid: no start cell");
  m.rows_ = rows;
  m.max_steps_ = max_steps;
  return m;
}

PointMaze PointMaze::from_file(const std::string& path, std::size_t max_steps) {
  std::ifstream f(path);
  if (!f) throw IoError("maze grid: cannot open " + path);
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
      line.pop_back();
    if (!line.empty()) rows.push_back(line);
  }
  return from_grid(rows, max_steps);
}

PointMaze PointMaze::named(const std::string& id) {
  if (id == "maze-medium") return from_grid(kMazeMedium, 200);
  if (id == "maze-large") {
    static const std::vector<std::string> large = {
        "############",
        "#S.........#",
        "#..........#",
        "##########.#",
        "#..........#",
        "#..........#",
        "#.##########",
        "#..........#",
        "#..........#",
        "##########.#",
        "#.........G#",
        "############",
    };
    return from_grid(large, 400);
  }
  // Anything else is treated as a layout file path; timeout scales with area.
  PointMaze m = from_file(id, 200);
  std::size_t area_steps = m.width_ * m.height_ * 4;
  return from_file(id, std::max<std::size_t>(200, area_steps));
}

bool PointMaze::wall_at(double x, double y) const {
  if (x < 0.0 || y < 0.0) return true;
  auto c = static_cast<std::size_t>(x);
  auto r = static_cast<std::size_t>(y);
  if (c >= width_ || r >= height_) return true;
  return rows_[r][c] == '#';
}

std::vector<double> PointMaze::reset(Rng& rng) {
  const auto& cell = start_cells_[rng.uniform_index(start_cells_.size())];
  x_ = static_cast<double>(cell[0]) + 0.5 + rng.uniform(-0.3, 0.3);
  y_ = static_cast<double>(cell[1]) + 0.5 + rng.uniform(-0.3, 0.3);
  vx_ = vy_ = 0.0;
  steps_ = 0;
  return observation();
}

void PointMaze::teleport(double x, double y, double vx, double vy) {
  x_ = x;
  y_ = y;
  vx_ = vx;
  vy_ = vy;
}

void PointMaze::restore(double x, double y, double vx, double vy,
                        std::size_t steps) {
  teleport(x, y, vx, vy);
  steps_ = steps;
}

std::vector<double> PointMaze::observation() const {
  double vcap = velocity_cap();
  return {x_ / static_cast<double>(width_) * 2.0 - 1.0,
          y_ / static_cast<double>(height_) * 2.0 - 1.0, vx_ / vcap, vy_ / vcap};
}

StepResult PointMaze::step(const std::array<double, 2>& action) {
  double ax = std::clamp(action[0], -1.0, 1.0);
  double ay = std::clamp(action[1], -1.0, 1.0);
  vx_ = damping_ * (vx_ + ax * dt_);
  vy_ = damping_ * (vy_ + ay * dt_);

  // Axis-separated moves; a blocked axis keeps its old coordinate and the
  // normal velocity component is zeroed (sliding along walls is allowed).
  double nx = x_ + vx_ * dt_;
  if (wall_at(nx, y_)) {
    nx = x_;
    vx_ = 0.0;
  }
  double ny = y_ + vy_ * dt_;
  if (wall_at(nx, ny)) {
    ny = y_;
    vy_ = 0.0;
  }
  x_ = nx;
  y_ = ny;
  steps_ += 1;

  double dx = x_ - goal_[0], dy = y_ - goal_[1];
  bool at_goal = dx * dx + dy * dy <= goal_radius_ * goal_radius_;
  StepResult res;
  res.reward = at_goal ? 1.0 : 0.0;
  res.terminated = at_goal;
  res.truncated = !at_goal && steps_ >= max_steps_;
  res.next_state = observation();
  return res;
}

std::vector<std::array<std::size_t, 2>> PointMaze::shortest_cell_path(
    std::size_t cx, std::size_t cy) const {
  auto gx = static_cast<std::size_t>(goal_[0]);
  auto gy = static_cast<std::size_t>(goal_[1]);
  return cell_path({cx, cy}, {gx, gy});
}

std::vector<std::array<std::size_t, 2>> PointMaze::cell_path(
    std::array<std::size_t, 2> from, std::array<std::size_t, 2> to) const {
  auto [cx, cy] = from;
  auto [gx, gy] = to;
  std::vector<std::int64_t> parent(width_ * height_, -1);
  auto idx = [&](std::size_t c, std::size_t r) { return r * width_ + c; };
  std::deque<std::array<std::size_t, 2>> queue{{cx, cy}};
  parent[idx(cx, cy)] = static_cast<std::int64_t>(idx(cx, cy));
  const int dc[4] = {1, -1, 0, 0};
  const int dr[4] = {0, 0, 1, -1};
  while (!queue.empty()) {
    auto [c, r] = queue.front();
    queue.pop_front();
    if (c == gx && r == gy) break;
    for (int k = 0; k < 4; ++k) {
      std::size_t nc = c + static_cast<std::size_t>(dc[k]);
      std::size_t nr = r + static_cast<std::size_t>(dr[k]);
      if (nc >= width_ || nr >= height_) continue;
      if (rows_[nr][nc] == '#') continue;
      if (parent[idx(nc, nr)] >= 0) continue;
      parent[idx(nc, nr)] = static_cast<std::int64_t>(idx(c, r));
      queue.push_back({nc, nr});
    }
  }
  if (parent[idx(gx, gy)] < 0) return {};
  std::vector<std::array<std::size_t, 2>> path;
  std::size_t cur = idx(gx, gy);
  while (true) {
    path.push_back({cur % width_, cur / width_});
    auto p = static_cast<std::size_t>(parent[cur]);
    if (p == cur) break;
    cur = p;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

namespace {

// Saturating waypoint controller: drive the post-damping velocity toward a
// target velocity aimed at the waypoint.
std::array<double, 2> waypoint_action(const PointMaze& env,
                                      const std::array<double, 2>& wp) {
  auto [x, y] = env.position();
  auto [vx, vy] = env.velocity();
  double dx = wp[0] - x, dy = wp[1] - y;
  double dist = std::sqrt(dx * dx + dy * dy);
  double vcap = env.velocity_cap();
  double speed = 0.8 * vcap;
  double vdx = dist > 1e-9 ? dx / dist * speed : 0.0;
  double vdy = dist > 1e-9 ? dy / dist * speed : 0.0;
  return {std::clamp((vdx / env.damping() - vx) / env.dt(), -1.0, 1.0),
          std::clamp((vdy / env.damping() - vy) / env.dt(), -1.0, 1.0)};
}

enum class EpisodeKind { kGoal, kWander, kRandom };

}  // namespace

std::vector<Trajectory> collect_trajectories(PointMaze env,
                                             const ScriptedCollector& collector,
                                             std::size_t n_episodes,
                                             std::uint64_t seed,
                                             ScriptedCollector::MixTally* tally) {
  if (n_episodes == 0)
    throw ConfigError("collect_trajectories: need at least one episode");

  std::vector<Trajectory> out;
  out.reserve(n_episodes);

  for (std::size_t ep = 0; ep < n_episodes; ++ep) {
    Rng rng = Rng::stream(seed, "collect-episode", ep);
    std::vector<double> obs = env.reset(rng);

    EpisodeKind kind = EpisodeKind::kGoal;
    if (collector.mode == CollectorMode::kDiverse) {
      double u = rng.uniform();
      if (u < collector.random_fraction)
        kind = EpisodeKind::kRandom;
      else
        kind = rng.uniform() < 0.5 ? EpisodeKind::kGoal : EpisodeKind::kWander;
    } else if (rng.uniform() < collector.offgoal_fraction) {
      kind = EpisodeKind::kWander;
    }
    if (tally) {
      if (kind == EpisodeKind::kGoal) tally->goal_directed += 1;
      if (kind == EpisodeKind::kWander) tally->wander += 1;
      if (kind == EpisodeKind::kRandom) tally->random += 1;
    }

    // Waypoint plan for the scripted kinds.
    std::vector<std::array<double, 2>> waypoints;
    if (kind != EpisodeKind::kRandom) {
      auto pos = env.position();
      auto cx = static_cast<std::size_t>(pos[0]);
      auto cy = static_cast<std::size_t>(pos[1]);
      std::vector<std::array<std::size_t, 2>> cells;
      if (kind == EpisodeKind::kGoal) {
        cells = env.shortest_cell_path(cx, cy);
      } else {
        // Wander toward a random free cell.
        std::vector<std::array<std::size_t, 2>> free_cells;
        for (std::size_t r = 0; r < env.height(); ++r)
          for (std::size_t c = 0; c < env.width(); ++c)
            if (env.grid()[r][c] != '#') free_cells.push_back({c, r});
        auto target = free_cells[rng.uniform_index(free_cells.size())];
        cells = env.cell_path({cx, cy}, target);
      }
      for (const auto& cell : cells)
        waypoints.push_back({static_cast<double>(cell[0]) + 0.5,
                             static_cast<double>(cell[1]) + 0.5});
      if (kind == EpisodeKind::kGoal && !waypoints.empty())
        waypoints.back() = env.goal();
    }

    Trajectory traj;
    std::size_t wp_index = 0;
    while (true) {
      std::array<double, 2> action{0.0, 0.0};
      if (kind == EpisodeKind::kRandom) {
        action = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
      } else if (!waypoints.empty()) {
        auto pos = env.position();
        while (wp_index + 1 < waypoints.size()) {
          double dx = waypoints[wp_index][0] - pos[0];
          double dy = waypoints[wp_index][1] - pos[1];
          if (dx * dx + dy * dy > 0.4 * 0.4) break;
          ++wp_index;
        }
        action = waypoint_action(env, waypoints[wp_index]);
        action[0] = std::clamp(action[0] + collector.action_noise * rng.gaussian(), -1.0, 1.0);
        action[1] = std::clamp(action[1] + collector.action_noise * rng.gaussian(), -1.0, 1.0);
      }

      StepResult res = env.step(action);
      Transition t;
      t.state = obs;
      t.action = {action[0], action[1]};
      t.reward = res.reward;
      t.next_state = res.next_state;
      t.terminated = res.terminated;
      t.truncated = res.truncated;
      obs = res.next_state;
      traj.success = traj.success || res.reward > 0.0;
      traj.steps.push_back(std::move(t));
      if (res.terminated || res.truncated) break;
    }
    out.push_back(std::move(traj));
  }
  return out;
}

}  // namespace o2o
