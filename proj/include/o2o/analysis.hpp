#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "o2o/critics.hpp"
#include "o2o/datastore.hpp"
#include "o2o/ndmath.hpp"

namespace o2o {

// Q values and dQ/da over a regular grid of a 2D action space at one state.
struct GradField {
  std::size_t resolution = 0;
  std::vector<double> a0, a1, q, dq0, dq1;  // row-major, resolution^2 entries
  double q_min = 0.0, q_max = 0.0;
};

// Analytic backprop field, cross-checked against central differences at ten
// random grid points (relative error 1e-3, h = 1e-5); a mismatch throws.
GradField grad_field(const Mlp& critic, const std::vector<double>& state,
                     std::size_t grid_res);

struct AscentPath {
  std::vector<std::array<double, 2>> points;  // includes the start
  bool converged = false;
};

using SuccessPred = std::function<bool(double, double)>;

// Iterate a <- clip(a + lr * dQ/da) from each start; converged when the
// final point satisfies the predicate.
std::vector<AscentPath> ascent_paths(const Mlp& critic,
                                     const std::vector<double>& state,
                                     const std::vector<std::array<double, 2>>& starts,
                                     double lr, std::size_t max_steps,
                                     const SuccessPred& success);

// The eight canonical starts on a ring of radius 0.9.
std::vector<std::array<double, 2>> ring_starts(double radius = 0.9,
                                               std::size_t count = 8);

struct DqdaStats {
  double max_abs = 0.0;
  double std_dev = 0.0;
};

// Element-wise |dQ/da| statistics over a probe batch.
DqdaStats dqda_stats(const Mlp& critic, const Matrix& states,
                     const Matrix& actions);

// One entry per checkpoint file, evaluated on the same probe.
std::vector<DqdaStats> dqda_over_training(
    const std::vector<std::string>& checkpoint_paths, const Matrix& probe_states,
    const Matrix& probe_actions);

struct RankingAccuracies {
  double noisy = 0.0;
  double very_noisy = 0.0;
  double random = 0.0;
  double permuted = 0.0;
};

// Fraction of held-out success rows whose dataset action strictly out-scores
// each negative category; ties count as incorrect.
RankingAccuracies ranking_accuracy(const Mlp& critic, const Matrix& states,
                                   const Matrix& actions, double sigma,
                                   std::uint64_t seed);

// Collect the (state, action) rows of every success transition.
std::pair<Matrix, Matrix> success_rows(const OfflineDataset& dataset);

// CSV emitters (schemas in docs/formats.md).
void write_field_csv(const GradField& field, const std::string& path);
void write_paths_csv(const std::vector<AscentPath>& paths, const std::string& path);
void write_dqda_csv(const std::vector<std::string>& labels,
                    const std::vector<DqdaStats>& series, const std::string& path);
void write_accuracy_csv(const RankingAccuracies& acc, const std::string& path);

// SVG renderings (presentation only).
void render_field_svg(const GradField& field, const std::vector<AscentPath>& paths,
                      double disc_radius, const std::string& path);
void render_dqda_svg(const std::vector<DqdaStats>& series, const std::string& path);

}  // namespace o2o
