#include "o2o/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "o2o/errors.hpp"
#include "o2o/svg.hpp"

namespace o2o {

namespace {

Matrix one_point(const std::vector<double>& state, double a0, double a1) {
  Matrix input(1, state.size() + 2);
  std::copy(state.begin(), state.end(), input.row(0));
  input(0, state.size()) = a0;
  input(0, state.size() + 1) = a1;
  return input;
}

double q_at(const Mlp& critic, const std::vector<double>& state, double a0,
            double a1) {
  return critic.forward(one_point(state, a0, a1))(0, 0);
}

// dQ/da at one action via the input gradient.
std::array<double, 2> dq_at(const Mlp& critic, const std::vector<double>& state,
                            double a0, double a1, double* q_out = nullptr) {
  Tape tape;
  Matrix q = critic.forward(one_point(state, a0, a1), tape);
  if (q_out) *q_out = q(0, 0);
  Matrix up(1, 1, 1.0);
  Matrix in_grad;
  critic.backward(tape, up, &in_grad);
  return {in_grad(0, state.size()), in_grad(0, state.size() + 1)};
}

void csv_number(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace

GradField grad_field(const Mlp& critic, const std::vector<double>& state,
                     std::size_t grid_res) {
  if (grid_res < 2) throw ConfigError("grad_field: grid resolution must be >= 2");
  if (critic.input_dim() != state.size() + 2)
    throw ShapeError(
        "grad_field: needs a 2-D action space (critic input = state + 2)");

  GradField field;
  field.resolution = grid_res;
  const std::size_t n = grid_res * grid_res;
  field.a0.reserve(n);
  field.a1.reserve(n);
  field.q.reserve(n);
  field.dq0.reserve(n);
  field.dq1.reserve(n);
  field.q_min = 1e300;
  field.q_max = -1e300;
  for (std::size_t iy = 0; iy < grid_res; ++iy) {
    double a1 = -1.0 + 2.0 * static_cast<double>(iy) / (grid_res - 1);
    for (std::size_t ix = 0; ix < grid_res; ++ix) {
      double a0 = -1.0 + 2.0 * static_cast<double>(ix) / (grid_res - 1);
      double q = 0.0;
      auto g = dq_at(critic, state, a0, a1, &q);
      ensure_finite(q, "grad_field");
      ensure_finite(g[0], "grad_field");
      field.a0.push_back(a0);
      field.a1.push_back(a1);
      field.q.push_back(q);
      field.dq0.push_back(g[0]);
      field.dq1.push_back(g[1]);
      field.q_min = std::min(field.q_min, q);
      field.q_max = std::max(field.q_max, q);
    }
  }

  // Spot-check the analytic field against central differences at ten smooth
  // probe points. A point within the step size of a ReLU kink makes the two
  // difference estimates disagree with each other; such points are skipped
  // rather than miscounted as backprop errors.
  Rng rng(0x67726164);  // fixed stream, deterministic output
  const double h1 = 1e-5, h2 = 5e-5;
  int checked = 0;
  for (int attempt = 0; attempt < 60 && checked < 10; ++attempt) {
    std::size_t idx = rng.uniform_index(n);
    double a0 = field.a0[idx], a1 = field.a1[idx];
    auto fd_pair = [&](double h) {
      double f0 = (q_at(critic, state, a0 + h, a1) - q_at(critic, state, a0 - h, a1)) / (2 * h);
      double f1 = (q_at(critic, state, a0, a1 + h) - q_at(critic, state, a0, a1 - h)) / (2 * h);
      return std::array<double, 2>{f0, f1};
    };
    auto fa = fd_pair(h1);
    auto fb = fd_pair(h2);
    double scale = std::max({1e-8, std::abs(fa[0]), std::abs(fa[1])});
    if (std::max(std::abs(fa[0] - fb[0]), std::abs(fa[1] - fb[1])) / scale > 5e-4)
      continue;  // non-smooth here
    double err = std::max(std::abs(fa[0] - field.dq0[idx]),
                          std::abs(fa[1] - field.dq1[idx]));
    if (err / scale > 1e-3)
      throw NumericError("grad_field: analytic gradient disagrees with "
                         "finite differences at a probe point");
    ++checked;
  }
  return field;
}

std::vector<std::array<double, 2>> ring_starts(double radius, std::size_t count) {
  std::vector<std::array<double, 2>> starts;
  for (std::size_t k = 0; k < count; ++k) {
    double th = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(count);
    starts.push_back({radius * std::cos(th), radius * std::sin(th)});
  }
  return starts;
}

std::vector<AscentPath> ascent_paths(const Mlp& critic,
                                     const std::vector<double>& state,
                                     const std::vector<std::array<double, 2>>& starts,
                                     double lr, std::size_t max_steps,
                                     const SuccessPred& success) {
  if (lr <= 0.0) throw ConfigError("ascent_paths: lr must be > 0");
  std::vector<AscentPath> paths;
  for (const auto& start : starts) {
    AscentPath path;
    double a0 = std::clamp(start[0], -1.0, 1.0);
    double a1 = std::clamp(start[1], -1.0, 1.0);
    path.points.push_back({a0, a1});
    for (std::size_t step = 0; step < max_steps; ++step) {
      if (success(a0, a1)) break;
      auto g = dq_at(critic, state, a0, a1);
      a0 = std::clamp(a0 + lr * g[0], -1.0, 1.0);
      a1 = std::clamp(a1 + lr * g[1], -1.0, 1.0);
      path.points.push_back({a0, a1});
    }
    path.converged = success(a0, a1);
    paths.push_back(std::move(path));
  }
  return paths;
}

DqdaStats dqda_stats(const Mlp& critic, const Matrix& states,
                     const Matrix& actions) {
  Tape tape;
  q_values(critic, states, actions, &tape);
  Matrix up(actions.rows(), 1, 1.0);
  Matrix in_grad;
  critic.backward(tape, up, &in_grad);
  DqdaStats out;
  const std::size_t sdim = states.cols();
  double sum = 0.0, sum2 = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < in_grad.rows(); ++i) {
    for (std::size_t j = sdim; j < in_grad.cols(); ++j) {
      double g = std::abs(in_grad(i, j));
      out.max_abs = std::max(out.max_abs, g);
      sum += g;
      sum2 += g * g;
      ++count;
    }
  }
  if (count > 0) {
    double mean = sum / static_cast<double>(count);
    out.std_dev = std::sqrt(std::max(0.0, sum2 / static_cast<double>(count) - mean * mean));
  }
  return out;
}

std::vector<DqdaStats> dqda_over_training(
    const std::vector<std::string>& checkpoint_paths, const Matrix& probe_states,
    const Matrix& probe_actions) {
  if (checkpoint_paths.empty())
    throw DataError("dqda_over_training: need at least one checkpoint");
  std::vector<DqdaStats> series;
  for (const auto& path : checkpoint_paths) {
    Mlp critic = load_net(path);
    series.push_back(dqda_stats(critic, probe_states, probe_actions));
  }
  return series;
}

std::pair<Matrix, Matrix> success_rows(const OfflineDataset& dataset) {
  const auto& idx = dataset.success_index();
  Matrix states(idx.size(), dataset.state_dim());
  Matrix actions(idx.size(), dataset.action_dim());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Transition& t = dataset.at(idx[i]);
    std::copy(t.state.begin(), t.state.end(), states.row(i));
    std::copy(t.action.begin(), t.action.end(), actions.row(i));
  }
  return {std::move(states), std::move(actions)};
}

RankingAccuracies ranking_accuracy(const Mlp& critic, const Matrix& states,
                                   const Matrix& actions, double sigma,
                                   std::uint64_t seed) {
  if (actions.rows() == 0)
    throw DataError("ranking_accuracy: no held-out success rows");
  Rng rng = Rng::stream(seed, "ranking-accuracy");

  // Shuffle rows first so the permuted negative pairs each row with an
  // unrelated state, as in training minibatches; consecutive transitions of
  // one trajectory would otherwise donate near-identical actions.
  const std::size_t n = actions.rows();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  Matrix sh_states(n, states.cols()), sh_actions(n, actions.cols());
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(states.row(order[i]), states.row(order[i]) + states.cols(),
              sh_states.row(i));
    std::copy(actions.row(order[i]), actions.row(order[i]) + actions.cols(),
              sh_actions.row(i));
  }
  const Matrix& s = sh_states;
  const Matrix& a = sh_actions;

  NegativeActions neg = make_negatives(a, sigma, rng);
  Matrix q_roll = q_values(critic, s, a);
  Matrix q_noisy = q_values(critic, s, neg.noisy);
  Matrix q_very = q_values(critic, s, neg.very_noisy);
  Matrix q_rand = q_values(critic, s, neg.random);
  Matrix q_perm = q_values(critic, s, neg.permuted);
  RankingAccuracies acc;
  const double denom = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Strict inequality: ties count as incorrect.
    if (q_roll(i, 0) > q_noisy(i, 0)) acc.noisy += 1.0;
    if (q_roll(i, 0) > q_very(i, 0)) acc.very_noisy += 1.0;
    if (q_roll(i, 0) > q_rand(i, 0)) acc.random += 1.0;
    if (q_roll(i, 0) > q_perm(i, 0)) acc.permuted += 1.0;
  }
  acc.noisy /= denom;
  acc.very_noisy /= denom;
  acc.random /= denom;
  acc.permuted /= denom;
  return acc;
}

void write_field_csv(const GradField& field, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("field csv: cannot open " + path);
  f << "a0,a1,q,dq_da0,dq_da1\n";
  std::string line;
  for (std::size_t i = 0; i < field.q.size(); ++i) {
    line.clear();
    csv_number(line, field.a0[i]);
    for (double v : {field.a1[i], field.q[i], field.dq0[i], field.dq1[i]}) {
      line += ",";
      csv_number(line, v);
    }
    line += "\n";
    f << line;
  }
}

void write_paths_csv(const std::vector<AscentPath>& paths,
                     const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("paths csv: cannot open " + path);
  f << "path,step,a0,a1,converged\n";
  std::string line;
  for (std::size_t p = 0; p < paths.size(); ++p) {
    for (std::size_t s = 0; s < paths[p].points.size(); ++s) {
      line = std::to_string(p) + "," + std::to_string(s) + ",";
      csv_number(line, paths[p].points[s][0]);
      line += ",";
      csv_number(line, paths[p].points[s][1]);
      line += paths[p].converged ? ",1\n" : ",0\n";
      f << line;
    }
  }
}

void write_dqda_csv(const std::vector<std::string>& labels,
                    const std::vector<DqdaStats>& series,
                    const std::string& path) {
  if (labels.size() != series.size())
    throw ShapeError("dqda csv: labels and series sizes differ");
  std::ofstream f(path);
  if (!f) throw IoError("dqda csv: cannot open " + path);
  f << "checkpoint,dqda_max,dqda_std\n";
  std::string line;
  for (std::size_t i = 0; i < series.size(); ++i) {
    line = labels[i] + ",";
    csv_number(line, series[i].max_abs);
    line += ",";
    csv_number(line, series[i].std_dev);
    line += "\n";
    f << line;
  }
}

void write_accuracy_csv(const RankingAccuracies& acc, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("accuracy csv: cannot open " + path);
  f << "category,accuracy\n";
  std::string line;
  auto row = [&](const char* name, double v) {
    line = name;
    line += ",";
    csv_number(line, v);
    line += "\n";
    f << line;
  };
  row("noisy", acc.noisy);
  row("very_noisy", acc.very_noisy);
  row("random", acc.random);
  row("permuted", acc.permuted);
}

void render_field_svg(const GradField& field, const std::vector<AscentPath>& paths,
                      double disc_radius, const std::string& path) {
  const double size = 440.0, margin = 20.0;
  const double plot = size - 2 * margin;
  auto px = [&](double a) { return margin + (a + 1.0) / 2.0 * plot; };
  auto py = [&](double a) { return size - margin - (a + 1.0) / 2.0 * plot; };

  SvgCanvas svg(size, size);
  const std::size_t res = field.resolution;
  double cell = plot / static_cast<double>(res - 1);
  double span = std::max(1e-12, field.q_max - field.q_min);
  for (std::size_t i = 0; i < field.q.size(); ++i) {
    double t = (field.q[i] - field.q_min) / span;
    svg.rect(px(field.a0[i]) - cell / 2, py(field.a1[i]) - cell / 2, cell, cell,
             heat_color(t));
  }
  // Quiver on a thinned grid.
  std::size_t stride = std::max<std::size_t>(1, res / 16);
  double max_norm = 1e-12;
  for (std::size_t i = 0; i < field.q.size(); ++i)
    max_norm = std::max(max_norm, std::hypot(field.dq0[i], field.dq1[i]));
  for (std::size_t iy = 0; iy < res; iy += stride) {
    for (std::size_t ix = 0; ix < res; ix += stride) {
      std::size_t i = iy * res + ix;
      double n = std::hypot(field.dq0[i], field.dq1[i]) / max_norm;
      double scale = 0.9 * cell * static_cast<double>(stride) * n;
      double hx = field.dq0[i], hy = field.dq1[i];
      double hn = std::hypot(hx, hy);
      if (hn < 1e-12) continue;
      svg.arrow(px(field.a0[i]), py(field.a1[i]),
                px(field.a0[i]) + hx / hn * scale,
                py(field.a1[i]) - hy / hn * scale, "#333333", 0.7);
    }
  }
  if (disc_radius > 0.0)
    svg.circle(px(0.0), py(0.0), disc_radius / 2.0 * plot, "#00aa00");
  const char* colors[] = {"#d62728", "#9467bd", "#8c564b", "#e377c2"};
  for (std::size_t p = 0; p < paths.size(); ++p) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& pt : paths[p].points) pts.push_back({px(pt[0]), py(pt[1])});
    svg.polyline(pts, paths[p].converged ? "#111111" : colors[p % 4], 1.4);
    if (!pts.empty())
      svg.circle(pts.front().first, pts.front().second, 3.0, "#111111", "#ffcc00");
  }
  svg.save(path);
}

void render_dqda_svg(const std::vector<DqdaStats>& series, const std::string& path) {
  const double w = 520.0, h = 280.0, margin = 40.0;
  SvgCanvas svg(w, h);
  if (series.empty()) {
    svg.save(path);
    return;
  }
  double vmax = 1e-12;
  for (const auto& s : series) vmax = std::max(vmax, s.max_abs);
  auto sx = [&](std::size_t i) {
    return margin + (w - 2 * margin) * static_cast<double>(i) /
                        std::max<std::size_t>(1, series.size() - 1);
  };
  auto sy = [&](double v) { return h - margin - (h - 2 * margin) * v / vmax; };
  svg.line(margin, h - margin, w - margin, h - margin, "#000000");
  svg.line(margin, margin, margin, h - margin, "#000000");
  std::vector<std::pair<double, double>> maxpts, stdpts;
  for (std::size_t i = 0; i < series.size(); ++i) {
    maxpts.push_back({sx(i), sy(series[i].max_abs)});
    stdpts.push_back({sx(i), sy(series[i].std_dev)});
  }
  svg.polyline(maxpts, "#d62728", 1.6);
  svg.polyline(stdpts, "#1f77b4", 1.6);
  svg.text(margin + 4, margin + 12, "max |dQ/da| (red), std (blue)");
  svg.save(path);
}

}  // namespace o2o
