#include "boxreach/replay.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "boxreach/errors.hpp"

namespace boxreach {

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayMemory: capacity must be positive");
}

void ReplayMemory::push(Transition t) {
  if (slots_.size() < capacity_) {
    slots_.push_back(std::move(t));
  } else {
    slots_[head_] = std::move(t);
  }
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

void ReplayMemory::clear() {
  slots_.clear();
  head_ = 0;
  size_ = 0;
}

const Transition& ReplayMemory::at(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("ReplayMemory::at");
  const std::size_t oldest = size_ < capacity_ ? 0 : head_;
  return slots_[(oldest + i) % capacity_];
}

const Transition& ReplayMemory::sample(Rng& rng) const {
  if (size_ == 0) throw NoDataError("ReplayMemory::sample on empty memory");
  return slots_[std::uniform_int_distribution<std::size_t>(0, size_ - 1)(rng)];
}

BatchSplit batch_split(long t, int batch, long ramp_period, int expert_max,
                       std::size_t interaction_size, std::size_t expert_size) {
  if (batch <= 0 || ramp_period <= 0 || expert_max < 0) {
    throw std::invalid_argument("batch_split: batch and ramp period must be positive");
  }
  BatchSplit split;
  const long ramp = std::clamp<long>(t / ramp_period, 0, expert_max);
  if (interaction_size == 0) {
    split.from_expert = expert_size == 0 ? 0 : batch;
    return split;
  }
  const int effective = static_cast<int>(std::min<std::size_t>(batch, interaction_size));
  split.from_expert = expert_size == 0 ? 0 : static_cast<int>(std::min<long>(ramp, effective));
  split.from_interaction = effective - split.from_expert;
  return split;
}

std::vector<Transition> sample_batch(const ReplayMemory& interaction, const ReplayMemory& expert,
                                     long t, int batch, long ramp_period, int expert_max,
                                     Rng& rng) {
  if (interaction.empty() && expert.empty()) throw NoDataError("sample_batch: both memories empty");
  const BatchSplit split =
      batch_split(t, batch, ramp_period, expert_max, interaction.size(), expert.size());
  std::vector<Transition> out;
  out.reserve(split.total());
  for (int i = 0; i < split.from_interaction; ++i) out.push_back(interaction.sample(rng));
  for (int i = 0; i < split.from_expert; ++i) out.push_back(expert.sample(rng));
  return out;
}

Batch stack(const std::vector<Transition>& ts) {
  if (ts.empty()) throw NoDataError("stack: empty batch");
  const Eigen::Index n = static_cast<Eigen::Index>(ts.size());
  Batch b;
  b.states.resize(ts.front().state.size(), n);
  b.actions.resize(ts.front().action.size(), n);
  b.rewards.resize(n);
  b.next_states.resize(ts.front().next_state.size(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    b.states.col(i) = ts[i].state;
    b.actions.col(i) = ts[i].action;
    b.rewards[i] = ts[i].reward;
    b.next_states.col(i) = ts[i].next_state;
  }
  return b;
}

void write_transitions_csv(std::ostream& out, const ReplayMemory& memory) {
  if (memory.empty()) {
    out << "\n";
    return;
  }
  const Transition& first = memory.at(0);
  const auto ns = first.state.size();
  const auto na = first.action.size();
  for (Eigen::Index i = 0; i < ns; ++i) out << "s" << i << ",";
  for (Eigen::Index i = 0; i < na; ++i) out << "a" << i << ",";
  out << "r,";
  for (Eigen::Index i = 0; i < ns; ++i) out << "n" << i << ",";
  out << "done\n";
  const auto old_precision = out.precision(17);
  for (std::size_t k = 0; k < memory.size(); ++k) {
    const Transition& t = memory.at(k);
    for (Eigen::Index i = 0; i < ns; ++i) out << t.state[i] << ",";
    for (Eigen::Index i = 0; i < na; ++i) out << t.action[i] << ",";
    out << t.reward << ",";
    for (Eigen::Index i = 0; i < ns; ++i) out << t.next_state[i] << ",";
    out << (t.done ? 1 : 0) << "\n";
  }
  out.precision(old_precision);
}

ReplayMemory read_transitions_csv(std::istream& in, std::size_t capacity) {
  ReplayMemory memory(capacity);
  std::string header;
  if (!std::getline(in, header) || header.empty()) return memory;
  int ns = 0, na = 0;
  {
    std::stringstream hs(header);
    std::string cell;
    while (std::getline(hs, cell, ',')) {
      if (cell.rfind('s', 0) == 0) ++ns;
      if (cell.rfind('a', 0) == 0) ++na;
    }
  }
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) v.push_back(std::stod(cell));
    if (static_cast<int>(v.size()) != 2 * ns + na + 2) {
      throw std::runtime_error("transition CSV row has " + std::to_string(v.size()) + " values");
    }
    Transition t;
    t.state = Eigen::Map<const Eigen::VectorXd>(v.data(), ns);
    t.action = Eigen::Map<const Eigen::VectorXd>(v.data() + ns, na);
    t.reward = v[ns + na];
    t.next_state = Eigen::Map<const Eigen::VectorXd>(v.data() + ns + na + 1, ns);
    t.done = v.back() != 0.0;
    memory.push(std::move(t));
  }
  return memory;
}

}  // namespace boxreach
