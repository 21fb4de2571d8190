#include "reachlab/rollouts.hpp"

#include <cmath>
#include <exception>
#include <thread>

#include "reachlab/csv.hpp"
#include "reachlab/errors.hpp"

namespace reachlab {
namespace {

struct Trajectory {
  std::vector<Transition> steps;
  bool aborted = false;
  double model_reward = 0.0;
  double true_reward = 0.0;
  double penalty = 0.0;
};

bool finite(State2 s) { return std::isfinite(s.x) && std::isfinite(s.y); }

Trajectory run_one(const DynamicsModel& model, const PenaltyKind& penalty,
                   const ActionFn& policy, std::span<const State2> pool, int k,
                   std::uint64_t seed, int epoch, std::uint64_t id) {
  Rng rng(seed);
  Trajectory tr;
  tr.steps.reserve(static_cast<std::size_t>(k));
  State2 s = pool[uniform_index(rng, pool.size())];
  for (int t = 0; t < k; ++t) {
    const Action2 a = policy(s, rng);
    const PenalizedOutput out = penalized_reward(model, penalty, s, a, rng);
    if (!finite(out.next) || !std::isfinite(out.reward)) {
      tr.aborted = true;
      tr.steps.clear();
      return tr;
    }
    tr.steps.push_back(Transition{s, a, out.reward, out.next, false, t, id, epoch});
    tr.model_reward += out.model_reward;
    tr.true_reward += model.env().reward({s.x + a.dx, s.y + a.dy});
    tr.penalty += out.penalty;
    s = out.next;
  }
  return tr;
}

}  // namespace

RolloutResult collect_rollouts(const DynamicsModel& model, const PenaltyKind& penalty,
                               const ActionFn& policy, std::span<const State2> pool,
                               int k, int count, Rng& rng, int epoch,
                               std::uint64_t first_id, int threads) {
  if (k < 1) throw ConfigError({"rollouts.k: must be >= 1"});
  if (count < 0) throw ConfigError({"rollouts.count: must be >= 0"});
  RolloutResult result;
  if (count == 0) return result;
  if (pool.empty()) throw Error("collect_rollouts: empty start pool");

  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count));
  for (auto& s : seeds) s = rng();
  std::vector<Trajectory> trajs(static_cast<std::size_t>(count));
  auto work = [&](int i) {
    trajs[i] = run_one(model, penalty, policy, pool, k, seeds[i], epoch,
                       first_id + static_cast<std::uint64_t>(i));
  };
  const int workers = std::max(1, std::min(threads, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) work(i);
  } else {
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    std::vector<std::thread> pool_threads;
    for (int w = 0; w < workers; ++w) {
      pool_threads.emplace_back([&, w] {
        try {
          for (int i = w; i < count; i += workers) work(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool_threads) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  result.transitions.reserve(static_cast<std::size_t>(count) * k);
  for (int i = 0; i < count; ++i) {
    Trajectory& tr = trajs[i];
    if (tr.aborted) {
      result.aborted.push_back(first_id + static_cast<std::uint64_t>(i));
      continue;
    }
    result.model_reward_sum += tr.model_reward;
    result.true_reward_sum += tr.true_reward;
    result.penalty_sum += tr.penalty;
    result.steps += tr.steps.size();
    result.transitions.insert(result.transitions.end(), tr.steps.begin(), tr.steps.end());
  }
  return result;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, int retain_epochs)
    : capacity_(capacity), retain_epochs_(retain_epochs) {
  if (capacity_ == 0) throw ConfigError({"rollouts.capacity: must be > 0"});
  if (retain_epochs_ < 1) throw ConfigError({"rollouts.retain_epochs: must be >= 1"});
}

void ReplayBuffer::add(int epoch, std::span<const Transition> items) {
  while (!items_.empty() && items_.front().epoch <= epoch - retain_epochs_) {
    items_.pop_front();
  }
  items_.insert(items_.end(), items.begin(), items.end());
  while (items_.size() > capacity_) items_.pop_front();
}

const Transition& ReplayBuffer::sample(Rng& rng) const {
  if (items_.empty()) throw Error("cannot sample from an empty buffer");
  return items_[uniform_index(rng, items_.size())];
}

int real_count(double ratio, int batch_size) {
  return static_cast<int>(std::ceil(ratio * batch_size - 1e-9));
}

std::vector<Transition> mixed_batch(const ReplayBuffer& real, const ReplayBuffer& synth,
                                    double ratio, int batch_size, Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw ConfigError({"rollouts.real_ratio: must lie in [0, 1]"});
  }
  if (batch_size < 1) throw ConfigError({"agent.batch_size: must be >= 1"});
  const int n_real = real_count(ratio, batch_size);
  const int n_synth = batch_size - n_real;
  if (n_real > 0 && real.empty()) throw Error("mixed_batch: real buffer is empty");
  if (n_synth > 0 && synth.empty()) throw Error("mixed_batch: synthetic buffer is empty");
  std::vector<Transition> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < n_real; ++i) out.push_back(real.sample(rng));
  for (int i = 0; i < n_synth; ++i) out.push_back(synth.sample(rng));
  return out;
}

void write_transitions_csv(std::ostream& os, std::span<const Transition> items) {
  os << "epoch,trajectory,step_index,s_x,s_y,a_x,a_y,r,s_next_x,s_next_y,done\n";
  for (const Transition& t : items) {
    os << t.epoch << "," << t.trajectory << "," << t.step_index << "," << fmt(t.s.x) << ","
       << fmt(t.s.y) << "," << fmt(t.a.dx) << "," << fmt(t.a.dy) << "," << fmt(t.r) << ","
       << fmt(t.s_next.x) << "," << fmt(t.s_next.y) << "," << (t.done ? 1 : 0) << "\n";
  }
}

}  // namespace reachlab
