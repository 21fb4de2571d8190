#ifndef REACHLAB_ROLLOUTS_HPP_
#define REACHLAB_ROLLOUTS_HPP_

#include <cstdint>
#include <deque>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "reachlab/dynamics.hpp"
#include "reachlab/transition.hpp"

namespace reachlab {

using ActionFn = std::function<Action2(State2, Rng&)>;

struct RolloutResult {
  std::vector<Transition> transitions;
  std::vector<std::uint64_t> aborted;  // ids of trajectories dropped as non-finite
  double model_reward_sum = 0.0;       // before penalty
  double true_reward_sum = 0.0;        // true field at the same (s, a)
  double penalty_sum = 0.0;
  std::size_t steps = 0;
};

// `count` trajectories of exactly k steps. Each trajectory draws its start
// state and all of its randomness from its own stream seeded from `rng`, so
// trajectories can run on separate threads without changing the result.
// Trajectory ids are first_id, first_id + 1, ...
RolloutResult collect_rollouts(const DynamicsModel& model, const PenaltyKind& penalty,
                               const ActionFn& policy, std::span<const State2> pool,
                               int k, int count, Rng& rng, int epoch = 0,
                               std::uint64_t first_id = 0, int threads = 1);

// FIFO storage holding at most `retain_epochs` epochs and `capacity` items.
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(std::size_t capacity, int retain_epochs);

  // Drops everything older than retain_epochs epochs relative to `epoch`, then
  // the oldest items beyond capacity.
  void add(int epoch, std::span<const Transition> items);
  void clear() { items_.clear(); }

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::size_t capacity() const { return capacity_; }
  int retain_epochs() const { return retain_epochs_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }
  const Transition& sample(Rng& rng) const;
  std::vector<Transition> snapshot() const { return {items_.begin(), items_.end()}; }

 private:
  std::deque<Transition> items_;
  std::size_t capacity_ = 0;
  int retain_epochs_ = 1;
};

// ceil(ratio * batch_size) uniform draws from `real`, the rest from `synth`.
std::vector<Transition> mixed_batch(const ReplayBuffer& real, const ReplayBuffer& synth,
                                    double ratio, int batch_size, Rng& rng);
int real_count(double ratio, int batch_size);

void write_transitions_csv(std::ostream& os, std::span<const Transition> items);

}  // namespace reachlab

#endif  // REACHLAB_ROLLOUTS_HPP_
