#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "o2o/ndmath.hpp"
#include "o2o/rng.hpp"

namespace o2o {

// One environment step. Rewards are sparse {0, 1} and actions live in
// [-1, 1]^d throughout the lab.
struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminated = false;
  bool truncated = false;
};

struct Trajectory {
  std::vector<Transition> steps;
  bool success = false;                // any reward > 0
  std::vector<double> return_to_go;    // filled by compute_return_to_go

  std::size_t length() const { return steps.size(); }
};

// G_t = sum_{k>=t} gamma^{k-t} r_k within the trajectory.
std::vector<double> compute_return_to_go(const Trajectory& traj, double gamma);

// Flat view of one stored transition plus its trajectory-level metadata.
struct TransitionRef {
  std::uint32_t traj = 0;
  std::uint32_t step = 0;
};

// Static offline store. Transitions are kept trajectory-delimited; success /
// failure index sets are built once at construction. Return-to-go is frozen
// at build time so Cal-QL reference values do not drift during training.
class OfflineDataset {
 public:
  OfflineDataset() = default;
  OfflineDataset(std::vector<Trajectory> trajectories, double gamma);

  double gamma() const { return gamma_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  std::size_t num_trajectories() const { return trajectories_.size(); }
  std::size_t num_transitions() const { return flat_.size(); }
  bool empty() const { return flat_.empty(); }

  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  const std::vector<TransitionRef>& success_index() const { return success_; }
  const std::vector<TransitionRef>& failure_index() const { return failure_; }
  const std::vector<TransitionRef>& all_index() const { return flat_; }

  const Transition& at(const TransitionRef& ref) const {
    return trajectories_[ref.traj].steps[ref.step];
  }
  double return_to_go_at(const TransitionRef& ref) const {
    return trajectories_[ref.traj].return_to_go[ref.step];
  }
  bool success_at(const TransitionRef& ref) const {
    return trajectories_[ref.traj].success;
  }

  // Split whole trajectories into (train, holdout); `holdout_fraction` of the
  // trajectory list (rounded down, deterministic shuffle by seed).
  std::pair<OfflineDataset, OfflineDataset> split_trajectories(
      double holdout_fraction, std::uint64_t seed) const;

 private:
  std::vector<Trajectory> trajectories_;
  std::vector<TransitionRef> flat_;
  std::vector<TransitionRef> success_;
  std::vector<TransitionRef> failure_;
  double gamma_ = 0.99;
  std::size_t state_dim_ = 0;
  std::size_t action_dim_ = 0;
};

// Transition-level success/failure partition (index sets into the dataset).
// Errors on an empty dataset.
std::pair<std::vector<TransitionRef>, std::vector<TransitionRef>> partition(
    const OfflineDataset& dataset);

// Online transition with the episode-level labels resolved. Online episodes
// are appended once they finish so success and return-to-go are known.
struct StoredTransition {
  Transition t;
  double return_to_go = 0.0;
  bool success = false;
  bool online = false;
};

// Fixed-capacity ring. Oldest entries are evicted first.
class ReplayRing {
 public:
  explicit ReplayRing(std::size_t capacity);

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_inserted() const { return total_; }

  void push(StoredTransition t);
  const StoredTransition& at(std::size_t i) const;  // i in [0, size)

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next write slot once full
  std::uint64_t total_ = 0;
  std::vector<StoredTransition> data_;
};

// One training batch in matrix form.
struct Batch {
  Matrix states;       // B x state_dim
  Matrix actions;      // B x action_dim
  Matrix next_states;  // B x state_dim
  std::vector<double> rewards;
  std::vector<std::uint8_t> terminated;
  std::vector<std::uint8_t> truncated;
  std::vector<std::uint8_t> success;  // trajectory-level label per row
  std::vector<double> refvals;        // V^mu per row (frozen return-to-go)
  std::vector<std::uint8_t> online;   // row origin: 0 offline, 1 online
  bool offline_fallback = false;      // set when the online store was empty

  std::size_t size() const { return rewards.size(); }
};

// Batch source combining the offline dataset with online experience.
//
// mixing_ratio in [0, 1]: stores stay separate and every batch holds exactly
// ceil(ratio * B) offline rows. mixing_ratio == -1: online transitions are
// appended to a pooled store preloaded with the offline data, and batches are
// drawn uniformly from the pool; the offline fraction then decays naturally.
class MixedSampler {
 public:
  MixedSampler(const OfflineDataset* offline, double mixing_ratio,
               std::size_t online_capacity);

  double mixing_ratio() const { return ratio_; }
  bool pooled() const { return ratio_ < 0.0; }
  std::size_t online_size() const { return ring_.size(); }
  const ReplayRing& ring() const { return ring_; }

  // Appends one finished-episode transition to the online side.
  void push_online(StoredTransition t);

  // True once sample() can produce a batch.
  bool ready() const;

  Batch sample(std::size_t batch_size, Rng& rng) const;

 private:
  const OfflineDataset* offline_;
  double ratio_;
  ReplayRing ring_;
};

// Fixed 50/50 split with stores kept separate for the whole run.
Batch hybrid_sample(const MixedSampler& sampler, std::size_t batch_size, Rng& rng);

// Dataset files (*.o2o): little-endian header (magic, version, gamma, dims,
// counts) followed by trajectory-delimited binary records. docs/formats.md
// has the byte layout.
void save_dataset(const OfflineDataset& dataset, const std::string& path);
OfflineDataset load_dataset(const std::string& path);

// One CSV row per transition with trajectory id and success flag.
void export_dataset_csv(const OfflineDataset& dataset, const std::string& path);

}  // namespace o2o
