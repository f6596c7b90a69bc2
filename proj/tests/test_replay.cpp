#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "marq/errors.hpp"
#include "marq/replay/agent_buffer.hpp"

using namespace marq;
using namespace marq::replay;

namespace {

Transition make(int agent, double x, int action, double reward = 0.0) {
  return Transition{agent, {x, -x}, action, reward, {x + 1.0, 0.0}, false};
}

// Counts rebuilt from the stored transitions.
std::map<std::vector<std::int64_t>, std::vector<std::int64_t>> recount(const AgentBuffer& b) {
  std::map<std::vector<std::int64_t>, std::vector<std::int64_t>> out;
  for (const auto& t : b.contents()) {
    auto& row = out[b.key_of(t.obs).cells];
    row.resize(static_cast<std::size_t>(b.num_actions()), 0);
    ++row[static_cast<std::size_t>(t.action)];
  }
  return out;
}

void check_recount(const AgentBuffer& b) {
  const auto expected = recount(b);
  CHECK(b.behavior().num_states() == expected.size());
  for (const auto& [cells, counts] : expected) {
    const StateKey key{cells};
    std::int64_t total = 0;
    for (int a = 0; a < b.num_actions(); ++a) {
      CHECK(b.behavior().count(key, a) == counts[static_cast<std::size_t>(a)]);
      total += counts[static_cast<std::size_t>(a)];
    }
    CHECK(b.behavior().state_total(key) == total);
  }
}

}  // namespace

TEST_CASE("push to an empty buffer") {
  AgentBuffer b(0, 4, 3);
  CHECK(b.empty());
  b.push(make(0, 0.5, 1));
  CHECK(b.size() == 1);
  CHECK(b.at(0) == make(0, 0.5, 1));
}

TEST_CASE("FIFO eviction at capacity 2") {
  AgentBuffer b(0, 2, 3);
  const auto t1 = make(0, 1.0, 0), t2 = make(0, 2.0, 1), t3 = make(0, 3.0, 2);
  b.push(t1);
  b.push(t2);
  b.push(t3);
  REQUIRE(b.size() == 2);
  CHECK(b.at(0) == t2);
  CHECK(b.at(1) == t3);
  CHECK_FALSE(b.behavior().seen(b.key_of(t1.obs)));
}

TEST_CASE("eviction order equals insertion order") {
  AgentBuffer b(0, 5, 2);
  for (int i = 0; i < 23; ++i) b.push(make(0, i, i % 2));
  for (std::size_t i = 0; i < 5; ++i) CHECK(b.at(i).obs[0] == 18.0 + static_cast<double>(i));
}

TEST_CASE("push validates ownership, actions and rewards") {
  AgentBuffer b(1, 4, 3);
  CHECK_THROWS_AS(b.push(make(0, 0.0, 0)), OwnershipError);
  CHECK_THROWS_AS(b.push(make(1, 0.0, 3)), ActionError);
  CHECK_THROWS_AS(b.push(make(1, 0.0, -1)), ActionError);
  CHECK_THROWS_AS(b.push(make(1, 0.0, 0, std::nan(""))), NumericError);
  CHECK(b.empty());
  CHECK_THROWS_AS(AgentBuffer(0, 0, 3), ParameterError);
}

TEST_CASE("100 random pushes at capacity 64 match a recount") {
  std::mt19937_64 rng(64);
  AgentBuffer b(0, 64, 4);
  for (int i = 0; i < 100; ++i) {
    b.push(make(0, std::uniform_int_distribution<int>(0, 6)(rng) * 0.5,
                std::uniform_int_distribution<int>(0, 3)(rng)));
  }
  CHECK(b.size() == 64);
  check_recount(b);
}

TEST_CASE("10^4 random transitions keep exact behavior probabilities") {
  std::mt19937_64 rng(10000);
  AgentBuffer b(0, 1000, 3);
  for (int i = 0; i < 10000; ++i) {
    b.push(make(0, std::uniform_int_distribution<int>(0, 9)(rng) * 0.1,
                std::uniform_int_distribution<int>(0, 2)(rng)));
  }
  const auto expected = recount(b);
  for (const auto& [cells, counts] : expected) {
    const StateKey key{cells};
    const double total = static_cast<double>(counts[0] + counts[1] + counts[2]);
    for (int a = 0; a < 3; ++a)
      CHECK(behavior_prob(b.behavior(), key, a) == static_cast<double>(counts[static_cast<std::size_t>(a)]) / total);
  }
}

TEST_CASE("behavior probabilities from small count tables") {
  EmpiricalBehavior eb(3);
  const auto s = make_state_key(7);
  eb.add(s, 2);
  CHECK(eb.behavior_prob(s, 2) == 1.0);
  CHECK(eb.behavior_prob(s, 0) == 0.0);

  const auto s2 = make_state_key(8);
  eb.add(s2, 0);
  eb.add(s2, 0);
  eb.add(s2, 1);
  CHECK(eb.behavior_prob(s2, 0) == 2.0 / 3.0);
  CHECK(eb.behavior_prob(s2, 1) == 1.0 / 3.0);

  CHECK_THROWS_AS(eb.behavior_prob(make_state_key(9), 0), UnseenStateError);
  const auto uniform = eb.distribution_or_uniform(make_state_key(9));
  for (int a = 0; a < 3; ++a) CHECK(uniform(a) == doctest::Approx(1.0 / 3.0));

  eb.remove(s, 2);
  CHECK_FALSE(eb.seen(s));
}

TEST_CASE("state keys quantize at the configured resolution") {
  const std::vector<double> a{0.10004, -0.2}, b{0.0999996, -0.2000004}, c{0.1014, -0.2};
  CHECK(make_state_key(a, 1e-3) == make_state_key(b, 1e-3));
  CHECK_FALSE(make_state_key(a, 1e-3) == make_state_key(c, 1e-3));
}

TEST_CASE("sampling a single-item buffer") {
  AgentBuffer b(0, 8, 2);
  b.push(make(0, 4.0, 1));
  const auto batch = sample_batch(b, 4, std::uint64_t{9});
  REQUIRE(batch.size() == 4);
  for (const auto& t : batch) CHECK(t == make(0, 4.0, 1));
}

TEST_CASE("sampling is deterministic for a fixed seed") {
  AgentBuffer b(0, 16, 2);
  for (int i = 0; i < 16; ++i) b.push(make(0, i, 0));
  CHECK(sample_batch(b, 32, std::uint64_t{5}) == sample_batch(b, 32, std::uint64_t{5}));
  CHECK_FALSE(sample_batch(b, 32, std::uint64_t{5}) == sample_batch(b, 32, std::uint64_t{6}));
  AgentBuffer empty(0, 4, 2);
  CHECK_THROWS_AS(sample_batch(empty, 1, std::uint64_t{1}), EmptySourceError);
}

TEST_CASE("10^5 draws from four items are uniform within 3 sigma") {
  AgentBuffer b(0, 4, 2);
  for (int i = 0; i < 4; ++i) b.push(make(0, i, 0));
  const std::size_t n = 100000;
  const auto batch = sample_batch(b, n, std::uint64_t{2024});
  std::vector<double> freq(4, 0.0);
  for (const auto& t : batch) freq[static_cast<std::size_t>(t.obs[0])] += 1.0;
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (double f : freq) CHECK(std::abs(f - n * 0.25) < 3.0 * sigma);
}

TEST_CASE("cross-agent sampling") {
  std::vector<AgentBuffer> buffers;
  for (int a = 0; a < 2; ++a) {
    buffers.emplace_back(a, 6, 2);
    for (int i = 0; i < 9; ++i) buffers.back().push(make(a, 10 * a + i, i % 2));
  }

  SUBCASE("donor provenance") {
    std::mt19937_64 rng(1);
    const auto cross = sample_cross(buffers, 0, 1, 50, rng);
    CHECK(cross.learner == 0);
    CHECK(cross.donor == 1);
    for (const auto& t : cross.transitions) CHECK(t.agent_id == 1);
  }
  SUBCASE("donor == learner degenerates to sample_batch") {
    std::mt19937_64 r1(4), r2(4);
    CHECK(sample_cross(buffers, 1, 1, 20, r1).transitions == sample_batch(buffers[1], 20, r2));
  }
  SUBCASE("batch equals direct ring lookups with the same draws") {
    std::mt19937_64 rng(77), oracle(77);
    const auto cross = sample_cross(buffers, 0, 1, 30, rng);
    std::uniform_int_distribution<std::size_t> pick(0, buffers[1].size() - 1);
    for (const auto& t : cross.transitions) CHECK(t == buffers[1].slot(pick(oracle)));
  }
  SUBCASE("empty donor") {
    std::vector<AgentBuffer> two{AgentBuffer(0, 2, 2), AgentBuffer(1, 2, 2)};
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(sample_cross(two, 0, 1, 1, rng), EmptySourceError);
  }
}

TEST_CASE("buffer dump and load preserve ring layout and sampling") {
  AgentBuffer b(2, 5, 3);
  for (int i = 0; i < 12; ++i) b.push(Transition{2, {0.1 * i}, i % 3, -0.5 * i, {0.2 * i}, i % 4 == 0});
  const auto bytes = dump_buffer(b);
  const AgentBuffer back = load_buffer(bytes);
  CHECK(back.contents() == b.contents());
  CHECK(back.insert_cursor() == b.insert_cursor());
  CHECK(back.behavior() == b.behavior());
  CHECK(sample_batch(back, 40, std::uint64_t{3}) == sample_batch(b, 40, std::uint64_t{3}));
  CHECK(dump_buffer(back) == bytes);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(load_buffer(truncated), LoadError);
}
