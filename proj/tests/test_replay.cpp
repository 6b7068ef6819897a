#include <sstream>

#include "boxreach/errors.hpp"
#include "boxreach/replay.hpp"
#include "doctest.h"

using namespace boxreach;

namespace {

Transition make(double tag) {
  Transition t;
  t.state = Eigen::Vector2d(tag, -tag);
  t.action = Eigen::VectorXd::Constant(1, tag / 10);
  t.reward = tag;
  t.next_state = Eigen::Vector2d(tag + 1, 1.0 / 3.0);
  t.done = static_cast<long>(tag) % 2 == 0;
  return t;
}

long expected_expert(long t, long ramp, int max) {
  return std::clamp(t / ramp, 0L, static_cast<long>(max));
}

}  // namespace

TEST_CASE("ring buffer") {
  ReplayMemory m(3);
  CHECK(m.empty());
  for (int i = 0; i < 3; ++i) m.push(make(i));
  CHECK(m.size() == 3);
  CHECK(m.at(0).reward == 0.0);
  m.push(make(3));
  CHECK(m.size() == 3);
  CHECK(m.at(0).reward == 1.0);
  CHECK(m.at(2).reward == 3.0);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(m.at(i).reward != 0.0);
  CHECK_THROWS(m.at(3));
  m.clear();
  CHECK(m.empty());
  CHECK_THROWS_AS(ReplayMemory(0), std::invalid_argument);
}

TEST_CASE("batch split schedule") {
  const long ramp = 2000;
  const int b = 64, max = 16;
  for (long t : {0L, 1L, ramp - 1, ramp, 2 * ramp, 10 * ramp, 1000000000L}) {
    BatchSplit s = batch_split(t, b, ramp, max, 1000, 1000);
    CHECK(s.total() == b);
    CHECK(s.from_expert == expected_expert(t, ramp, max));
    CHECK(s.from_interaction == b - s.from_expert);
  }
  CHECK(batch_split(4000, 64, 2000, 16, 1000, 1000).from_expert == 2);
  CHECK(batch_split(4000, 64, 2000, 16, 1000, 1000).from_interaction == 62);
  // No expert memory: everything from interaction.
  CHECK(batch_split(1000000, 64, 2000, 16, 1000, 0).from_expert == 0);
  // Interaction memory smaller than the batch: the batch shrinks.
  BatchSplit small = batch_split(0, 64, 2000, 16, 10, 1000);
  CHECK(small.total() == 10);
  // Empty interaction memory: all expert.
  BatchSplit cold = batch_split(0, 64, 2000, 16, 0, 1000);
  CHECK(cold.from_interaction == 0);
  CHECK(cold.from_expert == 64);
}

TEST_CASE("sample_batch") {
  Rng rng(1);
  ReplayMemory im(100), em(100);
  CHECK_THROWS_AS(sample_batch(im, em, 0, 8, 2000, 16, rng), NoDataError);
  for (int i = 0; i < 50; ++i) im.push(make(i));
  for (int i = 0; i < 50; ++i) em.push(make(1000 + i));
  auto batch = sample_batch(im, em, 6000, 8, 2000, 16, rng);
  REQUIRE(batch.size() == 8);
  int expert = 0;
  for (const auto& t : batch) expert += t.reward >= 1000 ? 1 : 0;
  CHECK(expert == 3);

  Batch stacked = stack(batch);
  CHECK(stacked.size() == 8);
  CHECK(stacked.states.rows() == 2);
  CHECK(stacked.actions.rows() == 1);
  CHECK(stacked.rewards[0] == batch[0].reward);
  CHECK(stacked.next_states.col(7) == batch[7].next_state);
}

TEST_CASE("transitions CSV round trip") {
  ReplayMemory m(10);
  for (int i = 0; i < 4; ++i) m.push(make(i + 0.123456789012345));
  std::stringstream io;
  write_transitions_csv(io, m);
  ReplayMemory back = read_transitions_csv(io, 10);
  REQUIRE(back.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back.at(i).state == m.at(i).state);
    CHECK(back.at(i).action == m.at(i).action);
    CHECK(back.at(i).reward == m.at(i).reward);
    CHECK(back.at(i).next_state == m.at(i).next_state);
    CHECK(back.at(i).done == m.at(i).done);
  }
}
