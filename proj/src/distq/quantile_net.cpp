#include "marq/distq/quantile_net.hpp"

#include <cmath>
#include <string>

#include "marq/errors.hpp"
#include "marq/numkit/softmax.hpp"

namespace marq::distq {

Vector QuantileQNet::quantile_midpoints() const {
  Vector tau(num_quantiles);
  for (int k = 0; k < num_quantiles; ++k)
    tau(k) = (2.0 * k + 1.0) / (2.0 * static_cast<double>(num_quantiles));
  return tau;
}

QuantileQNet make_quantile_qnet(int input_width, const std::vector<int>& hidden, int num_actions,
                                int num_quantiles, std::mt19937_64& rng) {
  if (num_actions < 1 || num_quantiles < 1)
    throw ParameterError("a quantile network needs at least one action and one quantile");
  std::vector<int> sizes{input_width};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(num_actions * num_quantiles);
  return QuantileQNet{numkit::make_dense_net(std::move(sizes), rng), num_actions, num_quantiles};
}

void validate(const QuantileQNet& q) {
  numkit::validate_shapes(q.net);
  if (q.net.output_width() != q.num_actions * q.num_quantiles)
    throw ShapeError("quantile net output width must equal |A| * K");
}

TargetNet make_target(const QuantileQNet& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ParameterError("tau must lie in (0, 1]");
  return TargetNet{online, tau};
}

Matrix mean_q_from_outputs(const Matrix& outputs, int num_actions, int num_quantiles) {
  if (outputs.rows() != num_actions * num_quantiles)
    throw ShapeError("output rows must equal |A| * K");
  Matrix q(num_actions, outputs.cols());
  for (int a = 0; a < num_actions; ++a)
    q.row(a) = outputs.middleRows(a * num_quantiles, num_quantiles).colwise().sum() /
               static_cast<double>(num_quantiles);
  return q;
}

Vector mean_q(const QuantileQNet& q, const Vector& obs) {
  return mean_q_from_outputs(numkit::forward(q.net, obs), q.num_actions, q.num_quantiles);
}

Matrix mean_q_batch(const QuantileQNet& q, const Matrix& obs) {
  return mean_q_from_outputs(numkit::forward_batch(q.net, obs), q.num_actions, q.num_quantiles);
}

int greedy_action(const Vector& q_values) {
  if (q_values.size() == 0) throw ShapeError("argmax of an empty vector");
  int best = 0;
  for (int a = 1; a < q_values.size(); ++a)
    if (q_values(a) > q_values(best)) best = a;
  return best;
}

PolicyDistribution softmax_policy(const Vector& q_values, double temperature) {
  return {numkit::softmax_logsumexp(q_values, temperature).probabilities, temperature};
}

PolicyDistribution epsilon_greedy_policy(const Vector& q_values, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  const auto n = static_cast<double>(q_values.size());
  Vector p = Vector::Constant(q_values.size(), epsilon / n);
  p(greedy_action(q_values)) += 1.0 - epsilon;
  return {p, 0.0};
}

PolicyDistribution policy_from_q(const QuantileQNet& q, const Vector& obs, PolicyMode mode) {
  if (mode.temperature) {
    if (!(*mode.temperature > 0.0)) throw ConfigError("softmax temperature must be positive");
    return softmax_policy(mean_q(q, obs), *mode.temperature);
  }
  if (mode.epsilon) return epsilon_greedy_policy(mean_q(q, obs), *mode.epsilon);
  throw ConfigError("policy_from_q needs a temperature or an epsilon");
}

Matrix softmax_columns(const Matrix& q_values, double temperature) {
  Matrix p(q_values.rows(), q_values.cols());
  for (Eigen::Index b = 0; b < q_values.cols(); ++b)
    p.col(b) = numkit::softmax_logsumexp(q_values.col(b), temperature).probabilities;
  return p;
}

Vector bellman_target_quantiles(const TargetNet& target, const replay::Transition& t,
                                double gamma) {
  const Eigen::Map<const Vector> next(t.next_obs.data(),
                                      static_cast<Eigen::Index>(t.next_obs.size()));
  return bellman_targets_batch(target.net, next, Vector::Constant(1, t.reward), {t.done}, gamma)
      .col(0);
}

Matrix bellman_targets_batch(const QuantileQNet& target, const Matrix& next_obs,
                             const Vector& rewards, const std::vector<bool>& done, double gamma) {
  const auto batch = rewards.size();
  if (next_obs.cols() != batch || static_cast<Eigen::Index>(done.size()) != batch)
    throw ShapeError("target batch components disagree in length");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ParameterError("gamma must lie in [0, 1)");
  const int K = target.num_quantiles;
  Matrix y(K, batch);
  for (Eigen::Index b = 0; b < batch; ++b) y.col(b).setConstant(rewards(b));
  if (gamma == 0.0) return y;

  std::vector<Eigen::Index> live;
  for (Eigen::Index b = 0; b < batch; ++b)
    if (!done[b]) live.push_back(b);
  if (live.empty()) return y;

  Matrix live_obs(next_obs.rows(), static_cast<Eigen::Index>(live.size()));
  for (std::size_t i = 0; i < live.size(); ++i) live_obs.col(i) = next_obs.col(live[i]);
  const Matrix out = numkit::forward_batch(target.net, live_obs);
  const Matrix q = mean_q_from_outputs(out, target.num_actions, K);
  for (std::size_t i = 0; i < live.size(); ++i) {
    const int best = greedy_action(q.col(i));
    y.col(live[i]) += gamma * out.col(i).segment(best * K, K);
  }
  return y;
}

QuantileLoss quantile_huber_loss(const Vector& predicted, const Vector& targets, double kappa) {
  if (!(kappa > 0.0)) throw ParameterError("kappa must be positive");
  if (predicted.size() != targets.size() || predicted.size() == 0)
    throw ShapeError("predicted and target quantiles must have equal, non-zero length");
  const auto K = predicted.size();
  const double inv_k = 1.0 / static_cast<double>(K);
  QuantileLoss out{0.0, Vector::Zero(K)};
  for (Eigen::Index k = 0; k < K; ++k) {
    const double tau = (2.0 * k + 1.0) / (2.0 * static_cast<double>(K));
    double g = 0.0;
    for (Eigen::Index j = 0; j < K; ++j) {
      const double u = targets(j) - predicted(k);
      const double weight = std::abs(tau - (u < 0.0 ? 1.0 : 0.0));
      const double au = std::abs(u);
      const double huber = au <= kappa ? 0.5 * u * u : kappa * (au - 0.5 * kappa);
      const double dhuber = au <= kappa ? u : kappa * (u > 0.0 ? 1.0 : -1.0);
      out.loss += weight * huber / kappa;
      g -= weight * dhuber / kappa;
    }
    out.grad(k) = g * inv_k;
  }
  out.loss *= inv_k;
  return out;
}

void polyak_update(const numkit::DenseNet& online, numkit::DenseNet& target, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ParameterError("tau must lie in (0, 1]");
  if (online.layer_sizes != target.layer_sizes) throw ShapeError("online/target shape mismatch");
  for (std::size_t l = 0; l < online.num_layers(); ++l) {
    if (tau == 1.0) {
      target.weights[l] = online.weights[l];
      target.biases[l] = online.biases[l];
    } else {
      target.weights[l] = (1.0 - tau) * target.weights[l] + tau * online.weights[l];
      target.biases[l] = (1.0 - tau) * target.biases[l] + tau * online.biases[l];
    }
  }
}

void polyak_update(const QuantileQNet& online, TargetNet& target) {
  polyak_update(online.net, target.net.net, target.tau);
}

namespace {

constexpr char kMagic[4] = {'M', 'Q', 'N', 'T'};

void write_bundle(ByteWriter& out, const numkit::GradBundle& g) {
  out.f64s(numkit::flatten(g));
}

numkit::GradBundle read_bundle(ByteReader& in, const numkit::DenseNet& like) {
  numkit::DenseNet tmp = like;
  numkit::unflatten(tmp, in.f64s());
  numkit::GradBundle g;
  g.weights = std::move(tmp.weights);
  g.biases = std::move(tmp.biases);
  return g;
}

}  // namespace

void write_agent_checkpoint(ByteWriter& out, const AgentCheckpoint& agent) {
  out.raw(kMagic, 4);
  out.u32(kCheckpointVersion);
  const auto& sizes = agent.online.net.layer_sizes;
  out.u32(static_cast<std::uint32_t>(sizes.size()));
  for (int s : sizes) out.u32(static_cast<std::uint32_t>(s));
  out.u32(static_cast<std::uint32_t>(agent.online.num_quantiles));
  out.u32(static_cast<std::uint32_t>(agent.online.num_actions));
  out.f64(agent.target.tau);
  out.f64s(numkit::flatten(agent.online.net));
  out.f64s(numkit::flatten(agent.target.net.net));
  const auto& c = agent.adam.config;
  out.f64(c.learning_rate);
  out.f64(c.beta1);
  out.f64(c.beta2);
  out.f64(c.epsilon);
  out.u64(agent.adam.step_count);
  write_bundle(out, agent.adam.first_moment);
  write_bundle(out, agent.adam.second_moment);
}

AgentCheckpoint read_agent_checkpoint(ByteReader& in) {
  char magic[4];
  in.raw(magic, 4);
  if (std::string_view(magic, 4) != std::string_view(kMagic, 4))
    throw LoadError("not a quantile-net checkpoint");
  const auto version = in.u32();
  if (version != kCheckpointVersion)
    throw LoadError("unsupported checkpoint version " + std::to_string(version));
  const auto layers = in.u32();
  if (layers < 2 || layers > 64) throw LoadError("implausible layer count");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < layers; ++i) {
    const auto s = in.u32();
    if (s == 0 || s > (1u << 20)) throw LoadError("implausible layer size");
    sizes.push_back(static_cast<int>(s));
  }
  const auto K = static_cast<int>(in.u32());
  const auto A = static_cast<int>(in.u32());
  if (K < 1 || A < 1 || static_cast<long long>(K) * A != sizes.back())
    throw LoadError("quantile layout does not match output width");
  const double tau = in.f64();
  if (!(tau > 0.0 && tau <= 1.0)) throw LoadError("tau out of range");

  AgentCheckpoint agent;
  agent.online = QuantileQNet{numkit::make_zero_net(sizes), A, K};
  try {
    numkit::unflatten(agent.online.net, in.f64s());
    agent.target = TargetNet{agent.online, tau};
    numkit::unflatten(agent.target.net.net, in.f64s());
  } catch (const ShapeError& e) {
    throw LoadError(std::string("parameter block: ") + e.what());
  }
  agent.adam.config.learning_rate = in.f64();
  agent.adam.config.beta1 = in.f64();
  agent.adam.config.beta2 = in.f64();
  agent.adam.config.epsilon = in.f64();
  agent.adam.step_count = in.u64();
  try {
    agent.adam.first_moment = read_bundle(in, agent.online.net);
    agent.adam.second_moment = read_bundle(in, agent.online.net);
  } catch (const ShapeError& e) {
    throw LoadError(std::string("optimizer block: ") + e.what());
  }
  return agent;
}

}  // namespace marq::distq
