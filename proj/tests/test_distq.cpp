#include <doctest.h>

#include <cmath>
#include <random>

#include "marq/distq/quantile_net.hpp"
#include "marq/errors.hpp"

using namespace marq;
using namespace marq::distq;

namespace {

// Direct transcription of the pinball-Huber loss, no shared code with the library.
double oracle_loss(const std::vector<double>& theta, const std::vector<double>& y, double kappa) {
  const double K = static_cast<double>(theta.size());
  double total = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double tau = (static_cast<double>(k) + 0.5) / K;
    for (double yj : y) {
      const double u = yj - theta[k];
      const double l = std::abs(u) <= kappa ? u * u / 2.0 : kappa * (std::abs(u) - kappa / 2.0);
      const double w = u < 0.0 ? 1.0 - tau : tau;
      total += w * l / kappa;
    }
  }
  return total / K;
}

Vector to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// One linear layer 1 -> 4 (two actions, two quantiles): outputs x * w + b.
QuantileQNet tiny_net() {
  QuantileQNet q{numkit::make_zero_net({1, 4}), 2, 2};
  q.net.weights[0] << 1.0, 1.0, 0.0, 0.0;
  q.net.biases[0] << 1.0, 3.0, 2.0, 2.0;
  return q;
}

}  // namespace

TEST_CASE("quantile midpoints") {
  std::mt19937_64 rng(1);
  const auto q = make_quantile_qnet(3, {5}, 2, 4, rng);
  const Vector tau = q.quantile_midpoints();
  CHECK(tau(0) == 0.125);
  CHECK(tau(1) == 0.375);
  CHECK(tau(2) == 0.625);
  CHECK(tau(3) == 0.875);
  CHECK(q.net.output_width() == 8);
  CHECK_THROWS_AS(make_quantile_qnet(3, {5}, 0, 4, rng), ParameterError);
}

TEST_CASE("validate rejects a head whose width is not |A| * K") {
  std::mt19937_64 rng(1);
  auto q = make_quantile_qnet(2, {3}, 2, 3, rng);
  CHECK_NOTHROW(validate(q));
  q.num_quantiles = 4;
  CHECK_THROWS_AS(validate(q), ShapeError);
}

TEST_CASE("mean Q averages each action's block of quantiles") {
  Matrix out(6, 2);
  out << 1, 10,
         2, 20,
         3, 30,
         -1, 0,
         -2, 0,
         -6, 3;
  const Matrix q = mean_q_from_outputs(out, 2, 3);
  CHECK(q(0, 0) == 2.0);
  CHECK(q(1, 0) == -3.0);
  CHECK(q(0, 1) == 20.0);
  CHECK(q(1, 1) == 1.0);
  CHECK_THROWS_AS(mean_q_from_outputs(out, 2, 2), ShapeError);
}

TEST_CASE("greedy action breaks ties toward the lowest index") {
  Vector q(4);
  q << 0.5, 2.0, 2.0, -1.0;
  CHECK(greedy_action(q) == 1);
  CHECK_THROWS_AS(greedy_action(Vector()), ShapeError);
}

TEST_CASE("policies derived from Q") {
  Vector q(4);
  q << 0.0, 1.0, 0.5, -2.0;

  SUBCASE("epsilon-greedy") {
    const auto p = epsilon_greedy_policy(q, 0.2);
    CHECK(p.probabilities(1) == doctest::Approx(0.85));
    CHECK(p.probabilities(0) == doctest::Approx(0.05));
    CHECK(p.probabilities.sum() == doctest::Approx(1.0));
    CHECK(epsilon_greedy_policy(q, 0.0).probabilities(1) == 1.0);
    CHECK_THROWS_AS(epsilon_greedy_policy(q, 1.5), ConfigError);
  }
  SUBCASE("softmax with temperature") {
    const auto p = softmax_policy(q, 0.5);
    double z = 0.0;
    for (int a = 0; a < 4; ++a) z += std::exp(q(a) / 0.5);
    for (int a = 0; a < 4; ++a) CHECK(p.probabilities(a) == doctest::Approx(std::exp(q(a) / 0.5) / z));
    CHECK(p.temperature == 0.5);
  }
  SUBCASE("policy_from_q mode selection") {
    const auto net = tiny_net();
    Vector x(1);
    x << 2.0;
    const auto soft = policy_from_q(net, x, PolicyMode{1.0, 0.3});
    CHECK(soft.temperature == 1.0);
    CHECK(soft.probabilities(0) == doctest::Approx(std::exp(4.0) / (std::exp(4.0) + std::exp(2.0))));
    const auto greedy = policy_from_q(net, x, PolicyMode{std::nullopt, 0.0});
    CHECK(greedy.probabilities(0) == 1.0);
    CHECK_THROWS_AS(policy_from_q(net, x, PolicyMode{}), ConfigError);
    CHECK_THROWS_AS(policy_from_q(net, x, PolicyMode{0.0, std::nullopt}), ConfigError);
  }
}

TEST_CASE("Bellman targets against hand-computed quantiles") {
  const auto net = tiny_net();
  Matrix next(1, 3);
  next << 2.0, -2.0, 2.0;
  Vector r(3);
  r << 0.5, -1.0, 4.0;
  const Matrix y = bellman_targets_batch(net, next, r, {false, false, true}, 0.9);
  // x = 2: outputs (3, 5, 2, 2), action 0 is greedy.
  CHECK(y(0, 0) == doctest::Approx(0.5 + 0.9 * 3.0));
  CHECK(y(1, 0) == doctest::Approx(0.5 + 0.9 * 5.0));
  // x = -2: outputs (-1, 1, 2, 2), action 1 is greedy.
  CHECK(y(0, 1) == doctest::Approx(-1.0 + 0.9 * 2.0));
  CHECK(y(1, 1) == doctest::Approx(-1.0 + 0.9 * 2.0));
  // terminal
  CHECK(y(0, 2) == 4.0);
  CHECK(y(1, 2) == 4.0);

  const Matrix y0 = bellman_targets_batch(net, next, r, {false, false, false}, 0.0);
  for (int b = 0; b < 3; ++b) CHECK(y0.col(b).isConstant(r(b), 0.0));

  CHECK_THROWS_AS(bellman_targets_batch(net, next, r, {false}, 0.9), ShapeError);
  CHECK_THROWS_AS(bellman_targets_batch(net, next, r, {false, false, false}, 1.0), ParameterError);
}

TEST_CASE("single-transition Bellman target matches the batch path") {
  const TargetNet target = make_target(tiny_net(), 0.01);
  const replay::Transition t{0, {0.0}, 1, 0.25, {2.0}, false};
  const Vector y = bellman_target_quantiles(target, t, 0.5);
  CHECK(y(0) == doctest::Approx(0.25 + 0.5 * 3.0));
  CHECK(y(1) == doctest::Approx(0.25 + 0.5 * 5.0));
  CHECK_THROWS_AS(make_target(tiny_net(), 0.0), ParameterError);
}

TEST_CASE("quantile Huber loss on scalar cases") {
  Vector p(1), y(1);
  p << 0.0;
  y << 3.0;
  CHECK(quantile_huber_loss(p, y, 1.0).loss == doctest::Approx(1.25));
  CHECK(quantile_huber_loss(p, y, 1.0).grad(0) == doctest::Approx(-0.5));
  y << 0.5;
  CHECK(quantile_huber_loss(p, y, 1.0).loss == doctest::Approx(0.0625));
  y << 0.0;
  CHECK(quantile_huber_loss(p, y, 1.0).loss == 0.0);
  CHECK_THROWS_AS(quantile_huber_loss(p, y, 0.0), ParameterError);
  CHECK_THROWS_AS(quantile_huber_loss(p, Vector(2), 1.0), ShapeError);
}

TEST_CASE("quantile Huber loss matches the brute-force oracle and finite differences") {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int K = 1 + trial % 9;
    const double kappa = trial % 2 == 0 ? 1.0 : 0.3;
    std::vector<double> theta(K), y(K);
    for (int k = 0; k < K; ++k) {
      theta[k] = n(rng);
      y[k] = n(rng);
    }
    const auto res = quantile_huber_loss(to_vec(theta), to_vec(y), kappa);
    CHECK(res.loss == doctest::Approx(oracle_loss(theta, y, kappa)).epsilon(1e-12));
    for (int k = 0; k < K; ++k) {
      const double h = 1e-6;
      auto up = theta, dn = theta;
      up[k] += h;
      dn[k] -= h;
      const double fd = (oracle_loss(up, y, kappa) - oracle_loss(dn, y, kappa)) / (2.0 * h);
      CHECK(res.grad(k) == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("Polyak averaging") {
  std::mt19937_64 rng(5);
  const auto online = make_quantile_qnet(3, {4}, 2, 2, rng);
  auto target = make_target(make_quantile_qnet(3, {4}, 2, 2, rng), 0.25);
  const auto before = numkit::flatten(target.net.net);
  const auto on = numkit::flatten(online.net);
  polyak_update(online, target);
  const auto after = numkit::flatten(target.net.net);
  for (std::size_t i = 0; i < on.size(); ++i) CHECK(after[i] == 0.75 * before[i] + 0.25 * on[i]);

  polyak_update(online.net, target.net.net, 1.0);
  CHECK(numkit::flatten(target.net.net) == on);

  const auto other = make_quantile_qnet(3, {5}, 2, 2, rng);
  CHECK_THROWS_AS(polyak_update(other.net, target.net.net, 0.5), ShapeError);
  CHECK_THROWS_AS(polyak_update(online.net, target.net.net, 1.5), ParameterError);
}

TEST_CASE("agent checkpoint round trip") {
  std::mt19937_64 rng(8);
  AgentCheckpoint agent{make_quantile_qnet(3, {6, 5}, 3, 4, rng), {}, {}};
  agent.target = make_target(agent.online, 0.05);
  agent.adam = numkit::AdamState::for_net(agent.online.net, {1e-3, 0.9, 0.999, 1e-8});
  for (int step = 0; step < 3; ++step) {
    numkit::GradBundle g = numkit::AdamState::for_net(agent.online.net).first_moment;
    for (auto& w : g.weights) w.setRandom();
    for (auto& b : g.biases) b.setRandom();
    numkit::adam_step(agent.online.net, g, agent.adam);
  }

  ByteWriter w;
  write_agent_checkpoint(w, agent);
  const auto bytes = w.take();
  ByteReader r(bytes);
  const AgentCheckpoint back = read_agent_checkpoint(r);
  CHECK(r.remaining() == 0);
  CHECK(numkit::flatten(back.online.net) == numkit::flatten(agent.online.net));
  CHECK(numkit::flatten(back.target.net.net) == numkit::flatten(agent.target.net.net));
  CHECK(back.target.tau == 0.05);
  CHECK(back.adam.step_count == 3);
  CHECK(numkit::flatten(back.adam.second_moment) == numkit::flatten(agent.adam.second_moment));

  ByteWriter again;
  write_agent_checkpoint(again, back);
  CHECK(again.bytes() == bytes);

  auto bad = bytes;
  bad[0] = 'X';
  ByteReader rb(bad);
  CHECK_THROWS_AS(read_agent_checkpoint(rb), LoadError);

  auto cut = bytes;
  cut.resize(cut.size() / 2);
  ByteReader rc(cut);
  CHECK_THROWS_AS(read_agent_checkpoint(rc), LoadError);
}
