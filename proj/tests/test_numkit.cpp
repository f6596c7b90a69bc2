#include <doctest.h>

#include <cmath>
#include <random>

#include "marq/errors.hpp"
#include "marq/numkit/adam.hpp"
#include "marq/numkit/dense_net.hpp"
#include "marq/numkit/grad_check.hpp"
#include "marq/numkit/softmax.hpp"

using namespace marq;
using namespace marq::numkit;

namespace {

// Layer-by-layer recomputation with explicit loops.
std::vector<double> loop_forward(const DenseNet& net, std::vector<double> x) {
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& w = net.weights[l];
    std::vector<double> y(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      double acc = net.biases[l](i);
      for (Eigen::Index j = 0; j < w.cols(); ++j) acc += w(i, j) * x[static_cast<std::size_t>(j)];
      const bool hidden = l + 1 < net.num_layers();
      y[static_cast<std::size_t>(i)] = hidden && acc < 0.0 ? 0.0 : acc;
    }
    x = std::move(y);
  }
  return x;
}

Vector random_vector(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

}  // namespace

TEST_CASE("zero network maps any input to zeros") {
  const DenseNet net = make_zero_net({3, 5, 2});
  Vector x(3);
  x << 4.0, -2.0, 7.5;
  const Vector y = forward(net, x);
  CHECK(y.size() == 2);
  CHECK(y.isZero(0.0));
}

TEST_CASE("single identity layer passes the input through") {
  DenseNet net = make_zero_net({3, 3});
  net.weights[0].setIdentity();
  Vector x(3);
  x << 1.5, -2.0, 0.25;
  CHECK(forward(net, x) == x);
}

TEST_CASE("forward agrees with a hand-rolled matrix-multiply oracle") {
  std::mt19937_64 rng(11);
  const DenseNet net = make_dense_net({3, 4, 2}, rng);
  Vector x(3);
  x << 1.0, 0.0, -1.0;
  const Vector y = forward(net, x);
  const auto want = loop_forward(net, {1.0, 0.0, -1.0});
  for (int i = 0; i < 2; ++i) CHECK(y(i) == doctest::Approx(want[static_cast<std::size_t>(i)]).epsilon(1e-14));

  SUBCASE("batched forward matches per-column forward") {
    Matrix xs(3, 4);
    for (int c = 0; c < 4; ++c) xs.col(c) = random_vector(3, rng);
    const Matrix ys = forward_batch(net, xs);
    for (int c = 0; c < 4; ++c) CHECK((ys.col(c) - forward(net, xs.col(c))).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("forward rejects a mismatched input width") {
  const DenseNet net = make_zero_net({3, 2});
  CHECK_THROWS_AS(forward(net, Vector::Zero(4)), ShapeError);
  CHECK_THROWS_AS(backward(net, Vector::Zero(3), Vector::Zero(3)), ShapeError);
}

TEST_CASE("initialization is uniform within the fan-in bound") {
  std::mt19937_64 rng(3);
  const DenseNet net = make_dense_net({16, 9, 4}, rng);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.layer_sizes[l]));
    CHECK(net.weights[l].cwiseAbs().maxCoeff() <= bound);
    CHECK(net.biases[l].cwiseAbs().maxCoeff() <= bound);
  }
  std::mt19937_64 again(3);
  CHECK(flatten(make_dense_net({16, 9, 4}, again)) == flatten(net));
}

TEST_CASE("backward of zero cotangent is all zeros") {
  std::mt19937_64 rng(5);
  const DenseNet net = make_dense_net({4, 8, 3}, rng);
  const auto g = backward(net, random_vector(4, rng), Vector::Zero(3));
  for (double v : flatten(g)) CHECK(v == 0.0);
  CHECK(g.input_grad.isZero(0.0));
}

TEST_CASE("linear one-to-one net has dL/dw = x and dL/db = 1") {
  DenseNet net = make_zero_net({1, 1});
  net.weights[0](0, 0) = 0.7;
  Vector x(1);
  x << 2.5;
  const auto g = backward(net, x, Vector::Ones(1));
  CHECK(g.weights[0](0, 0) == 2.5);
  CHECK(g.biases[0](0) == 1.0);
  CHECK(g.input_grad(0, 0) == 0.7);
}

TEST_CASE("random 4-8-3 net passes central finite differences") {
  std::mt19937_64 rng(17);
  const DenseNet net = make_dense_net({4, 8, 3}, rng);
  const Vector x = random_vector(4, rng);
  const Vector cot = random_vector(3, rng);
  const LossFn fn = [&](const DenseNet& n) {
    return LossAndGrad{forward(n, x).dot(cot), backward(n, x, cot)};
  };
  const auto rep = finite_diff_check(fn, net, 1e-4);
  CHECK(rep.passed);
  CHECK(rep.worst_relative_error < 1e-4);
  CHECK(rep.parameters_checked == net.num_parameters());
}

TEST_CASE("batched backward sums the per-sample gradients") {
  std::mt19937_64 rng(19);
  const DenseNet net = make_dense_net({3, 6, 2}, rng);
  Matrix xs(3, 5), cots(2, 5);
  for (int c = 0; c < 5; ++c) {
    xs.col(c) = random_vector(3, rng);
    cots.col(c) = random_vector(2, rng);
  }
  const auto batched = backward_batch(net, forward_cached(net, xs), cots);
  GradBundle summed = GradBundle::zeros_like(net);
  for (int c = 0; c < 5; ++c) {
    const auto g = backward(net, xs.col(c), cots.col(c));
    summed += g;
    CHECK((batched.input_grad.col(c) - g.input_grad.col(0)).cwiseAbs().maxCoeff() < 1e-15);
  }
  const auto a = flatten(batched), b = flatten(summed);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("quadratic loss gradient check is essentially exact") {
  std::mt19937_64 rng(23);
  const DenseNet net = make_dense_net({3, 4, 2}, rng);
  const LossFn fn = [](const DenseNet& n) {
    const auto flat = flatten(n);
    double v = 0.0;
    for (double p : flat) v += p * p;
    GradBundle g = GradBundle::zeros_like(n);
    for (std::size_t l = 0; l < n.num_layers(); ++l) {
      g.weights[l] = 2.0 * n.weights[l];
      g.biases[l] = 2.0 * n.biases[l];
    }
    return LossAndGrad{v, g};
  };
  const auto rep = finite_diff_check(fn, net, 1e-4);
  CHECK(rep.passed);
  CHECK(rep.worst_relative_error < 1e-9);
}

TEST_CASE("a corrupted gradient entry is flagged") {
  std::mt19937_64 rng(29);
  const DenseNet net = make_dense_net({3, 5, 2}, rng);
  const Vector x = random_vector(3, rng);
  const Vector cot = random_vector(2, rng);
  const LossFn fn = [&](const DenseNet& n) {
    auto g = backward(n, x, cot);
    g.biases[1](0) *= 2.0;
    return LossAndGrad{forward(n, x).dot(cot), g};
  };
  const auto rep = finite_diff_check(fn, net, 1e-4);
  CHECK_FALSE(rep.passed);
  CHECK(rep.worst_relative_error > 0.1);
}

TEST_CASE("flatten and unflatten round-trip") {
  std::mt19937_64 rng(31);
  const DenseNet net = make_dense_net({2, 3, 2}, rng);
  DenseNet copy = make_zero_net({2, 3, 2});
  unflatten(copy, flatten(net));
  CHECK(flatten(copy) == flatten(net));
  CHECK_THROWS_AS(unflatten(copy, std::vector<double>(3, 0.0)), ShapeError);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  std::mt19937_64 rng(37);
  DenseNet net = make_dense_net({3, 4, 2}, rng);
  const auto before = flatten(net);
  AdamState st = AdamState::for_net(net);
  adam_step(net, GradBundle::zeros_like(net), st);
  CHECK(flatten(net) == before);
  CHECK(st.step_count == 1);
}

TEST_CASE("first adam step moves a scalar by the learning rate") {
  DenseNet net = make_zero_net({1, 1});
  net.weights[0](0, 0) = 1.0;
  AdamState st = AdamState::for_net(net);
  GradBundle g = GradBundle::zeros_like(net);
  g.weights[0](0, 0) = 0.37;
  adam_step(net, g, st);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
  CHECK(1.0 - net.weights[0](0, 0) == doctest::Approx(3e-4 * 0.37 / (0.37 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("two adam steps equal a scripted scalar recomputation exactly") {
  std::mt19937_64 rng(41);
  DenseNet net = make_dense_net({2, 3, 1}, rng);
  AdamConfig cfg;
  cfg.learning_rate = 1e-2;
  AdamState st = AdamState::for_net(net, cfg);
  std::vector<double> p = flatten(net), m(p.size(), 0.0), v(p.size(), 0.0);
  for (int t = 1; t <= 2; ++t) {
    GradBundle g = GradBundle::zeros_like(net);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      g.weights[l] = Matrix::Random(g.weights[l].rows(), g.weights[l].cols());
      g.biases[l] = Vector::Random(g.biases[l].size());
    }
    const auto gf = flatten(g);
    adam_step(net, g, st);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gf[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * (gf[i] * gf[i]);
      p[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.epsilon);
    }
    CHECK(flatten(net) == p);
  }
  CHECK(st.step_count == 2);
}

TEST_CASE("adam rejects a non-finite gradient without touching anything") {
  std::mt19937_64 rng(43);
  DenseNet net = make_dense_net({2, 2}, rng);
  const auto before = flatten(net);
  AdamState st = AdamState::for_net(net);
  GradBundle g = GradBundle::zeros_like(net);
  g.biases[0](1) = std::nan("");
  CHECK_THROWS_AS(adam_step(net, g, st), NumericError);
  CHECK(flatten(net) == before);
  CHECK(st.step_count == 0);
  CHECK(flatten(st.first_moment) == std::vector<double>(before.size(), 0.0));
}

TEST_CASE("softmax of equal logits is uniform") {
  const auto r = softmax_logsumexp(Vector::Constant(4, 3.2));
  for (int i = 0; i < 4; ++i) CHECK(r.probabilities(i) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(r.logsumexp == doctest::Approx(3.2 + std::log(4.0)));
}

TEST_CASE("softmax is stable for huge logits") {
  Vector z(2);
  z << 1000.0, 0.0;
  const auto r = softmax_logsumexp(z);
  CHECK(std::isfinite(r.logsumexp));
  CHECK(r.probabilities(0) == doctest::Approx(1.0));
  CHECK(r.probabilities(1) < 1e-300);
  CHECK(r.logsumexp == doctest::Approx(1000.0));
}

TEST_CASE("softmax of (1, 2, 3) matches an extended-precision oracle") {
  Vector z(3);
  z << 1.0, 2.0, 3.0;
  const auto r = softmax_logsumexp(z);
  long double zsum = 0.0L;
  for (int i = 1; i <= 3; ++i) zsum += std::exp(static_cast<long double>(i));
  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    const long double want = std::exp(static_cast<long double>(i + 1)) / zsum;
    CHECK(std::abs(r.probabilities(i) - static_cast<double>(want)) < 1e-12);
    total += r.probabilities(i);
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
  CHECK(std::abs(r.logsumexp - static_cast<double>(std::log(zsum))) < 1e-12);
}

TEST_CASE("softmax temperature and errors") {
  Vector z(2);
  z << 0.0, 2.0;
  const auto hot = softmax_logsumexp(z, 2.0);
  CHECK(hot.probabilities(1) == doctest::Approx(std::exp(1.0) / (1.0 + std::exp(1.0))));
  CHECK_THROWS_AS(softmax_logsumexp(z, 0.0), ParameterError);
  CHECK_THROWS_AS(softmax_logsumexp(z, -1.0), ParameterError);
  z(0) = std::nan("");
  CHECK_THROWS_AS(softmax_logsumexp(z), NumericError);
}

TEST_CASE("softmax vjp matches finite differences of the softmax") {
  std::mt19937_64 rng(47);
  const Vector z = random_vector(5, rng);
  const Vector g = random_vector(5, rng);
  const Vector p = softmax_logsumexp(z).probabilities;
  const Vector got = softmax_vjp(p, g);
  for (int i = 0; i < 5; ++i) {
    Vector up = z, down = z;
    up(i) += 1e-6;
    down(i) -= 1e-6;
    const double num = (softmax_logsumexp(up).probabilities.dot(g) -
                        softmax_logsumexp(down).probabilities.dot(g)) / 2e-6;
    CHECK(got(i) == doctest::Approx(num).epsilon(1e-6));
  }
}
