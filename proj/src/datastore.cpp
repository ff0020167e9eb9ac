#include "o2o/datastore.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>

#include "o2o/errors.hpp"

namespace o2o {

std::vector<double> compute_return_to_go(const Trajectory& traj, double gamma) {
  if (gamma < 0.0 || gamma > 1.0)
    throw ConfigError("return_to_go: gamma must be in [0, 1]");
  std::vector<double> rtg(traj.steps.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = traj.steps.size(); i-- > 0;) {
    acc = traj.steps[i].reward + gamma * acc;
    rtg[i] = acc;
  }
  return rtg;
}

OfflineDataset::OfflineDataset(std::vector<Trajectory> trajectories, double gamma)
    : trajectories_(std::move(trajectories)), gamma_(gamma) {
  for (std::uint32_t ti = 0; ti < trajectories_.size(); ++ti) {
    Trajectory& traj = trajectories_[ti];
    bool any_reward = false;
    for (const Transition& t : traj.steps) any_reward = any_reward || t.reward > 0.0;
    traj.success = any_reward;
    if (traj.return_to_go.size() != traj.steps.size())
      traj.return_to_go = compute_return_to_go(traj, gamma_);
    for (std::uint32_t si = 0; si < traj.steps.size(); ++si) {
      TransitionRef ref{ti, si};
      flat_.push_back(ref);
      (traj.success ? success_ : failure_).push_back(ref);
      if (state_dim_ == 0 && action_dim_ == 0) {
        state_dim_ = traj.steps[si].state.size();
        action_dim_ = traj.steps[si].action.size();
      }
      if (traj.steps[si].state.size() != state_dim_ ||
          traj.steps[si].action.size() != action_dim_) {
        throw DataError("OfflineDataset: inconsistent state/action dimensions");
      }
    }
  }
}

std::pair<std::vector<TransitionRef>, std::vector<TransitionRef>> partition(
    const OfflineDataset& dataset) {
  if (dataset.empty()) throw DataError("partition: dataset is empty");
  return {dataset.success_index(), dataset.failure_index()};
}

std::pair<OfflineDataset, OfflineDataset> OfflineDataset::split_trajectories(
    double holdout_fraction, std::uint64_t seed) const {
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
    throw ConfigError("split_trajectories: holdout fraction must be in [0, 1)");
  std::vector<std::size_t> order(trajectories_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::stream(seed, "holdout-split");
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  std::size_t n_holdout =
      static_cast<std::size_t>(holdout_fraction * static_cast<double>(order.size()));
  std::vector<Trajectory> train, holdout;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_holdout ? holdout : train).push_back(trajectories_[order[i]]);
  }
  return {OfflineDataset(std::move(train), gamma_),
          OfflineDataset(std::move(holdout), gamma_)};
}

ReplayRing::ReplayRing(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("ReplayRing: capacity must be > 0");
  data_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
}

void ReplayRing::push(StoredTransition t) {
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
  ++total_;
}

const StoredTransition& ReplayRing::at(std::size_t i) const {
  // Index 0 is the oldest surviving entry.
  if (data_.size() < capacity_) return data_[i];
  return data_[(head_ + i) % capacity_];
}

MixedSampler::MixedSampler(const OfflineDataset* offline, double mixing_ratio,
                           std::size_t online_capacity)
    : offline_(offline), ratio_(mixing_ratio), ring_(online_capacity) {
  if (!(ratio_ == -1.0 || (ratio_ >= 0.0 && ratio_ <= 1.0)))
    throw ConfigError("MixedSampler: mixing ratio must be in [0, 1] or -1");
  if (pooled() && offline_) {
    for (const TransitionRef& ref : offline_->all_index()) {
      StoredTransition st;
      st.t = offline_->at(ref);
      st.return_to_go = offline_->return_to_go_at(ref);
      st.success = offline_->success_at(ref);
      st.online = false;
      ring_.push(std::move(st));
    }
  }
}

void MixedSampler::push_online(StoredTransition t) {
  t.online = true;
  ring_.push(std::move(t));
}

bool MixedSampler::ready() const {
  if (pooled()) return ring_.size() > 0;
  if (ratio_ > 0.0) return offline_ && !offline_->empty();
  return ring_.size() > 0;
}

static void append_row(Batch& b, std::size_t row, const Transition& t,
                       double rtg, bool success, bool online) {
  std::copy(t.state.begin(), t.state.end(), b.states.row(row));
  std::copy(t.action.begin(), t.action.end(), b.actions.row(row));
  std::copy(t.next_state.begin(), t.next_state.end(), b.next_states.row(row));
  b.rewards[row] = t.reward;
  b.terminated[row] = t.terminated ? 1 : 0;
  b.truncated[row] = t.truncated ? 1 : 0;
  b.success[row] = success ? 1 : 0;
  b.refvals[row] = rtg;
  b.online[row] = online ? 1 : 0;
}

static Batch make_batch(std::size_t n, std::size_t sd, std::size_t ad) {
  Batch b;
  b.states = Matrix(n, sd);
  b.actions = Matrix(n, ad);
  b.next_states = Matrix(n, sd);
  b.rewards.assign(n, 0.0);
  b.terminated.assign(n, 0);
  b.truncated.assign(n, 0);
  b.success.assign(n, 0);
  b.refvals.assign(n, 0.0);
  b.online.assign(n, 0);
  return b;
}

Batch MixedSampler::sample(std::size_t batch_size, Rng& rng) const {
  if (batch_size == 0) throw ConfigError("sample: batch size must be > 0");

  if (pooled()) {
    if (ring_.size() == 0) throw DataError("sample: pooled store is empty");
    Batch b = make_batch(batch_size, ring_.at(0).t.state.size(),
                         ring_.at(0).t.action.size());
    for (std::size_t i = 0; i < batch_size; ++i) {
      const StoredTransition& st = ring_.at(rng.uniform_index(ring_.size()));
      append_row(b, i, st.t, st.return_to_go, st.success, st.online);
    }
    return b;
  }

  std::size_t n_off = static_cast<std::size_t>(
      std::ceil(ratio_ * static_cast<double>(batch_size)));
  std::size_t n_on = batch_size - n_off;
  bool fallback = false;
  if (n_on > 0 && ring_.size() == 0) {
    // No rollouts yet: fall back to all-offline and flag it.
    n_off = batch_size;
    n_on = 0;
    fallback = true;
  }
  if (n_off > 0 && (!offline_ || offline_->empty()))
    throw DataError("sample: offline rows requested but offline dataset is empty");
  if (n_off == 0 && ring_.size() == 0)
    throw DataError("sample: both stores empty");

  std::size_t sd = n_off > 0 ? offline_->state_dim() : ring_.at(0).t.state.size();
  std::size_t ad = n_off > 0 ? offline_->action_dim() : ring_.at(0).t.action.size();
  Batch b = make_batch(batch_size, sd, ad);
  b.offline_fallback = fallback;
  for (std::size_t i = 0; i < n_off; ++i) {
    const TransitionRef& ref =
        offline_->all_index()[rng.uniform_index(offline_->num_transitions())];
    append_row(b, i, offline_->at(ref), offline_->return_to_go_at(ref),
               offline_->success_at(ref), false);
  }
  for (std::size_t i = 0; i < n_on; ++i) {
    const StoredTransition& st = ring_.at(rng.uniform_index(ring_.size()));
    append_row(b, n_off + i, st.t, st.return_to_go, st.success, true);
  }
  return b;
}

Batch hybrid_sample(const MixedSampler& sampler, std::size_t batch_size, Rng& rng) {
  if (sampler.pooled())
    throw ConfigError("hybrid_sample: requires separate stores, not pooled mode");
  if (sampler.mixing_ratio() != 0.5)
    throw ConfigError("hybrid_sample: sampler must be configured with ratio 0.5");
  return sampler.sample(batch_size, rng);
}

static constexpr char kDataMagic[8] = {'O', '2', 'O', 'D', 'A', 'T', 'A', '\0'};
static constexpr std::uint32_t kDataVersion = 1;

template <typename T>
static void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
static void read_pod(std::ifstream& f, T& v) {
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
}

static void write_vec(std::ofstream& f, const std::vector<double>& v) {
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

static void read_vec(std::ifstream& f, std::vector<double>& v, std::size_t n) {
  v.resize(n);
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(n * sizeof(double)));
}

void save_dataset(const OfflineDataset& dataset, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_dataset: cannot open " + path);
  f.write(kDataMagic, sizeof(kDataMagic));
  write_pod(f, kDataVersion);
  write_pod(f, dataset.gamma());
  write_pod(f, static_cast<std::uint32_t>(dataset.state_dim()));
  write_pod(f, static_cast<std::uint32_t>(dataset.action_dim()));
  write_pod(f, static_cast<std::uint32_t>(dataset.num_trajectories()));
  write_pod(f, static_cast<std::uint64_t>(dataset.num_transitions()));
  for (const Trajectory& traj : dataset.trajectories()) {
    write_pod(f, static_cast<std::uint32_t>(traj.steps.size()));
    std::uint8_t succ = traj.success ? 1 : 0;
    write_pod(f, succ);
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
      const Transition& t = traj.steps[i];
      write_vec(f, t.state);
      write_vec(f, t.action);
      write_pod(f, t.reward);
      write_vec(f, t.next_state);
      std::uint8_t term = t.terminated ? 1 : 0, trunc = t.truncated ? 1 : 0;
      write_pod(f, term);
      write_pod(f, trunc);
      write_pod(f, traj.return_to_go[i]);
    }
  }
  if (!f) throw IoError("save_dataset: write failed for " + path);
}

OfflineDataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_dataset: cannot open " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kDataMagic, sizeof(magic)) != 0)
    throw IoError("load_dataset: " + path + " is not a dataset file");
  std::uint32_t version = 0, sd = 0, ad = 0, n_traj = 0;
  std::uint64_t n_total = 0;
  double gamma = 0.0;
  read_pod(f, version);
  if (version != kDataVersion)
    throw IoError("load_dataset: unsupported version " + std::to_string(version));
  read_pod(f, gamma);
  read_pod(f, sd);
  read_pod(f, ad);
  read_pod(f, n_traj);
  read_pod(f, n_total);
  std::vector<Trajectory> trajectories;
  trajectories.reserve(n_traj);
  std::uint64_t seen = 0;
  for (std::uint32_t ti = 0; ti < n_traj; ++ti) {
    std::uint32_t n_steps = 0;
    std::uint8_t succ = 0;
    read_pod(f, n_steps);
    read_pod(f, succ);
    Trajectory traj;
    traj.steps.resize(n_steps);
    traj.return_to_go.resize(n_steps);
    for (std::uint32_t si = 0; si < n_steps; ++si) {
      Transition& t = traj.steps[si];
      read_vec(f, t.state, sd);
      read_vec(f, t.action, ad);
      read_pod(f, t.reward);
      read_vec(f, t.next_state, sd);
      std::uint8_t term = 0, trunc = 0;
      read_pod(f, term);
      read_pod(f, trunc);
      t.terminated = term != 0;
      t.truncated = trunc != 0;
      read_pod(f, traj.return_to_go[si]);
    }
    traj.success = succ != 0;
    seen += n_steps;
    trajectories.push_back(std::move(traj));
  }
  if (!f || seen != n_total)
    throw IoError("load_dataset: truncated or corrupt file " + path);
  return OfflineDataset(std::move(trajectories), gamma);
}

static void csv_number(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

void export_dataset_csv(const OfflineDataset& dataset, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("export_dataset_csv: cannot open " + path);
  std::string line = "traj,step,success";
  for (std::size_t i = 0; i < dataset.state_dim(); ++i)
    line += ",s" + std::to_string(i);
  for (std::size_t i = 0; i < dataset.action_dim(); ++i)
    line += ",a" + std::to_string(i);
  line += ",reward";
  for (std::size_t i = 0; i < dataset.state_dim(); ++i)
    line += ",sp" + std::to_string(i);
  line += ",terminated,truncated,return_to_go\n";
  f << line;
  for (std::uint32_t ti = 0; ti < dataset.num_trajectories(); ++ti) {
    const Trajectory& traj = dataset.trajectories()[ti];
    for (std::uint32_t si = 0; si < traj.steps.size(); ++si) {
      const Transition& t = traj.steps[si];
      line.clear();
      line += std::to_string(ti) + "," + std::to_string(si) + ",";
      line += traj.success ? "1" : "0";
      for (double v : t.state) { line += ","; csv_number(line, v); }
      for (double v : t.action) { line += ","; csv_number(line, v); }
      line += ","; csv_number(line, t.reward);
      for (double v : t.next_state) { line += ","; csv_number(line, v); }
      line += t.terminated ? ",1" : ",0";
      line += t.truncated ? ",1" : ",0";
      line += ","; csv_number(line, traj.return_to_go[si]);
      line += "\n";
      f << line;
    }
  }
  if (!f) throw IoError("export_dataset_csv: write failed for " + path);
}

}  // namespace o2o
