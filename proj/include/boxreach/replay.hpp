#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "boxreach/random.hpp"

namespace boxreach {

/// (s, a, r, s') record. States are flattened StateVectors and actions are in
/// normalized units, i.e. joint increments divided by dq_max.
struct Transition {
  Eigen::VectorXd state;
  Eigen::VectorXd action;
  double reward = 0.0;
  Eigen::VectorXd next_state;
  bool done = false;
};

/// Bounded FIFO ring of transitions.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return size_ == 0; }
  void clear();

  /// i-th stored transition, oldest first.
  const Transition& at(std::size_t i) const;
  const Transition& sample(Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next write slot
  std::size_t size_ = 0;
  std::vector<Transition> slots_;
};

struct BatchSplit {
  int from_interaction = 0;
  int from_expert = 0;
  int total() const { return from_interaction + from_expert; }
};

/// Expert share grows as clip(floor(t / ramp_period), 0, expert_max). The
/// batch shrinks to the interaction-memory size while that is smaller than
/// `batch`. With an empty interaction memory the whole batch is expert data.
BatchSplit batch_split(long t, int batch, long ramp_period, int expert_max,
                       std::size_t interaction_size, std::size_t expert_size);

/// Draws uniformly with replacement from each memory according to
/// batch_split. Throws NoDataError when both memories are empty.
std::vector<Transition> sample_batch(const ReplayMemory& interaction, const ReplayMemory& expert,
                                     long t, int batch, long ramp_period, int expert_max,
                                     Rng& rng);

/// Column-stacked view of a batch for the networks.
struct Batch {
  Eigen::MatrixXd states;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards;
  Eigen::MatrixXd next_states;

  Eigen::Index size() const { return states.cols(); }
};

Batch stack(const std::vector<Transition>& transitions);

/// CSV with columns s*, a*, r, n*, done; values written with 17 significant
/// digits so they read back exactly.
void write_transitions_csv(std::ostream& out, const ReplayMemory& memory);
ReplayMemory read_transitions_csv(std::istream& in, std::size_t capacity);

}  // namespace boxreach
