#include <doctest.h>

#include <random>

#include "marq/errors.hpp"
#include "marq/tabular/iterates.hpp"

#ifndef MARQ_FIXTURE_DIR
#define MARQ_FIXTURE_DIR "tests/fixtures"
#endif

using namespace marq;
using namespace marq::tabular;

namespace {

TabularMDP chain() { return load_mdp(std::string(MARQ_FIXTURE_DIR) + "/chain2.mdp"); }

// Q* of the chain worked out by hand: state 1 pays 2 forever at gamma 0.5,
// so Q(1, .) = 4, Q(0, 1) = 0 + 0.5 * 4 and Q(0, 0) = 0.5 + 0.5 * 2.
QTable chain_q_star() {
  QTable q(2, 2);
  q << 1.5, 2.0, 4.0, 4.0;
  return q;
}

Eigen::MatrixXd uniform_policy(int s, int a) { return Eigen::MatrixXd::Constant(s, a, 1.0 / a); }

}  // namespace

TEST_CASE("fixture parses to the expected chain") {
  const auto mdp = chain();
  CHECK(mdp.num_states == 2);
  CHECK(mdp.num_actions == 2);
  CHECK(mdp.gamma == 0.5);
  CHECK(mdp.rewards(0, 0) == 0.5);
  CHECK(mdp.next_state_dist(0, 1)(1) == 1.0);
}

TEST_CASE("value iteration on the chain reaches the closed form") {
  const auto mdp = chain();
  const auto fp = value_iteration(mdp, QTable::Zero(2, 2));
  CHECK(fp.converged);
  CHECK((fp.q - chain_q_star()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("one Bellman backup by hand") {
  const auto mdp = chain();
  QTable q(2, 2);
  q << 1.0, -1.0, 3.0, 0.0;
  const QTable b = bellman_optimality_backup(mdp, q);
  CHECK(b(0, 0) == 0.5 + 0.5 * 1.0);
  CHECK(b(0, 1) == 0.0 + 0.5 * 3.0);
  CHECK(b(1, 0) == 2.0 + 0.5 * 3.0);
}

TEST_CASE("penalized iterate with alpha 0 is the plain backup") {
  std::mt19937_64 rng(2);
  const auto mdp = random_mdp(5, 3, 0.8, rng);
  const QTable q = QTable::Random(5, 3);
  const auto pi = random_positive_policy(5, 3, rng);
  CHECK(penalized_iterate(mdp, q, pi, 0.0) == bellman_optimality_backup(mdp, q));
}

TEST_CASE("penalized fixed point is shifted down by alpha / (1 - gamma)") {
  const auto mdp = chain();
  const auto pi = uniform_policy(2, 2);
  const auto fp = iterate_to_fixed_point(
      [&](const QTable& q) { return penalized_iterate(mdp, q, pi, 0.3); }, QTable::Zero(2, 2));
  CHECK(fp.converged);
  const QTable expected = chain_q_star().array() - 0.3 / (1.0 - 0.5);
  CHECK((fp.q - expected).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("stationary iterate subtracts alpha times the policy ratio") {
  const auto mdp = chain();
  const QTable q = QTable::Zero(2, 2);
  Eigen::MatrixXd pi(2, 2), data(2, 2);
  pi << 0.9, 0.1, 0.5, 0.5;
  data << 0.1, 0.9, 0.5, 0.5;
  const QTable st = stationary_iterate(mdp, q, pi, data, 0.5);
  const QTable b = bellman_optimality_backup(mdp, q);
  CHECK(st(0, 0) - b(0, 0) == doctest::Approx(-4.5));
  CHECK(st(0, 1) - b(0, 1) == doctest::Approx(-0.5 / 9.0));
  CHECK(st(1, 0) - b(1, 0) == doctest::Approx(-0.5));
  CHECK(cross_agent_iterate(mdp, q, pi, data, 0.5) == st);
}

TEST_CASE("the optimality backup is a gamma contraction") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const double gamma = 0.5 + 0.4 * (trial % 5) / 4.0;
    const auto mdp = random_mdp(4, 3, gamma, rng);
    const QTable a = QTable::Random(4, 3) * 5.0, b = QTable::Random(4, 3) * 5.0;
    const double lhs =
        (bellman_optimality_backup(mdp, a) - bellman_optimality_backup(mdp, b)).cwiseAbs().maxCoeff();
    CHECK(lhs <= gamma * (a - b).cwiseAbs().maxCoeff() + 1e-12);
  }
}

TEST_CASE("random generators produce valid objects") {
  std::mt19937_64 rng(7);
  const auto mdp = random_mdp(6, 4, 0.9, rng);
  CHECK_NOTHROW(validate(mdp));
  CHECK(mdp.rewards.cwiseAbs().maxCoeff() <= 1.0);
  const auto pi = random_positive_policy(6, 4, rng, 0.02);
  CHECK(pi.minCoeff() >= 0.02);
  for (int s = 0; s < 6; ++s) CHECK(pi.row(s).sum() == doctest::Approx(1.0));
}

TEST_CASE("text format round trip and validation errors") {
  std::mt19937_64 rng(11);
  const auto mdp = random_mdp(3, 2, 0.7, rng);
  const auto back = parse_mdp(format_mdp(mdp));
  CHECK(back.num_states == 3);
  CHECK(back.gamma == doctest::Approx(0.7));
  CHECK((back.rewards - mdp.rewards).cwiseAbs().maxCoeff() < 1e-12);
  for (std::size_t i = 0; i < mdp.transitions.size(); ++i)
    CHECK((back.transitions[i] - mdp.transitions[i]).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(parse_mdp("1 1 0.5\n0.0 0.7\n"), Error);
  CHECK_THROWS_AS(parse_mdp("1 1 1.0\n0.0 1.0\n"), Error);
  CHECK_THROWS_AS(parse_mdp("2 1 0.5\n0.0 0 1\n"), Error);
  CHECK_THROWS_AS(load_mdp("/nonexistent/path.mdp"), Error);
}
