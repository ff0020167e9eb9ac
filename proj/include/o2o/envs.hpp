#pragma once

#include <array>
#include <string>
#include <vector>

#include "o2o/datastore.hpp"
#include "o2o/rng.hpp"

namespace o2o {

// Single-state 2D bandit: reward 1 inside a disc of radius R at the origin,
// 0 outside. Actions live in [-1, 1]^2 and states are empty (0-dim).
struct ToyDiscTask {
  double success_radius = 0.5;

  bool inside(double a0, double a1) const {
    return a0 * a0 + a1 * a1 <= success_radius * success_radius;
  }
};

// Sampled as one-step trajectories: success actions uniform within the disc
// (reward 1), failure actions outside the disc in the right half-plane
// (a0 > 0, reward 0).
OfflineDataset toy_sample_dataset(const ToyDiscTask& task, std::size_t n_succ,
                                  std::size_t n_fail, std::uint64_t seed);

struct StepResult {
  std::vector<double> next_state;  // normalized observation
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
};

// Continuous point mass in a grid maze. The action is a 2D acceleration in
// [-1, 1]^2; the dynamics are a damped double integrator and walls zero the
// normal velocity component. Reward is 1 exactly when the position is within
// goal_radius of the goal center, and the episode terminates on success.
class PointMaze {
 public:
  PointMaze() = default;  // empty; assign from a factory before use

  // Grid file characters: '#' wall, '.' free, 'G' goal, 'S' start cell.
  static PointMaze from_grid(const std::vector<std::string>& rows,
                             std::size_t max_steps);
  static PointMaze from_file(const std::string& path, std::size_t max_steps);
  // Built-in layouts: "maze-medium" (8x8, one U detour, 200-step timeout)
  // and "maze-large" (12x12, two detours, 400-step timeout).
  static PointMaze named(const std::string& id);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t max_steps() const { return max_steps_; }
  std::size_t steps_taken() const { return steps_; }
  double goal_radius() const { return goal_radius_; }
  std::array<double, 2> goal() const { return goal_; }
  bool wall_at(double x, double y) const;
  std::size_t observation_dim() const { return 4; }
  std::size_t action_dim() const { return 2; }
  double dt() const { return dt_; }
  double damping() const { return damping_; }

  // Velocity magnitude cap per axis implied by damping: d*amax*dt/(1-d).
  double velocity_cap() const { return damping_ * dt_ / (1.0 - damping_); }

  std::vector<double> reset(Rng& rng);
  StepResult step(const std::array<double, 2>& action);

  std::vector<double> observation() const;
  std::array<double, 2> position() const { return {x_, y_}; }
  std::array<double, 2> velocity() const { return {vx_, vy_}; }
  // Test hook: place the mass directly.
  void teleport(double x, double y, double vx, double vy);
  // Full state restore, including the step counter (checkpoint resume).
  void restore(double x, double y, double vx, double vy, std::size_t steps);

  const std::vector<std::string>& grid() const { return rows_; }
  // BFS shortest cell path from (cx, cy) to the goal cell; empty if blocked.
  std::vector<std::array<std::size_t, 2>> shortest_cell_path(
      std::size_t cx, std::size_t cy) const;
  std::vector<std::array<std::size_t, 2>> cell_path(
      std::array<std::size_t, 2> from, std::array<std::size_t, 2> to) const;

 private:
  std::vector<std::string> rows_;
  std::size_t width_ = 0, height_ = 0;
  std::vector<std::array<std::size_t, 2>> start_cells_;
  std::array<double, 2> goal_{0, 0};
  double goal_radius_ = 0.4;
  double dt_ = 0.15;
  double damping_ = 0.9;
  std::size_t max_steps_ = 200;

  double x_ = 0, y_ = 0, vx_ = 0, vy_ = 0;
  std::size_t steps_ = 0;
};

enum class CollectorMode { kPlay, kDiverse };

// Scripted behavior policies for offline data collection. Play mode follows
// a BFS waypoint plan with action noise; a fraction of its episodes are
// demonstrations toward some other free cell, which run to the timeout and
// land in the failure partition. Diverse mode mixes goal-directed,
// wander-to-random-cell, and uniform-random episodes.
struct ScriptedCollector {
  CollectorMode mode = CollectorMode::kPlay;
  double action_noise = 0.3;
  double random_fraction = 0.4;   // diverse only: fraction of random episodes
  double offgoal_fraction = 0.25; // play only: demonstrations to other cells

  // Per-episode counts for the summary line of gen-data.
  struct MixTally {
    std::size_t goal_directed = 0;
    std::size_t wander = 0;
    std::size_t random = 0;
  };
};

std::vector<Trajectory> collect_trajectories(PointMaze env,
                                             const ScriptedCollector& collector,
                                             std::size_t n_episodes,
                                             std::uint64_t seed,
                                             ScriptedCollector::MixTally* tally = nullptr);

}  // namespace o2o
