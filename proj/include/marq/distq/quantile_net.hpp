#pragma once

#include <optional>
#include <random>
#include <vector>

#include "marq/binary_io.hpp"
#include "marq/numkit/adam.hpp"
#include "marq/numkit/dense_net.hpp"
#include "marq/replay/transition.hpp"

namespace marq::distq {

using numkit::Matrix;
using numkit::Vector;

inline constexpr int kDefaultQuantiles = 32;
inline constexpr double kDefaultKappa = 1.0;

/// QR-DQN head: the network emits |A| * K values, laid out action-major
/// (output index a * K + k is quantile k of action a).
struct QuantileQNet {
  numkit::DenseNet net;
  int num_actions = 0;
  int num_quantiles = 0;

  int input_width() const { return net.input_width(); }
  /// tau_hat_k = (2k + 1) / (2K).
  Vector quantile_midpoints() const;
};

QuantileQNet make_quantile_qnet(int input_width, const std::vector<int>& hidden, int num_actions,
                                int num_quantiles, std::mt19937_64& rng);
/// Throws ShapeError when the output width is not num_actions * num_quantiles.
void validate(const QuantileQNet& q);

/// Online-net copy updated by Polyak averaging.
struct TargetNet {
  QuantileQNet net;
  double tau = 0.005;
};

TargetNet make_target(const QuantileQNet& online, double tau);

/// Mean over quantiles of raw outputs: (|A| * K) x B -> |A| x B.
Matrix mean_q_from_outputs(const Matrix& outputs, int num_actions, int num_quantiles);
Vector mean_q(const QuantileQNet& q, const Vector& obs);
Matrix mean_q_batch(const QuantileQNet& q, const Matrix& obs);

/// Lowest index wins ties.
int greedy_action(const Vector& q_values);

struct PolicyDistribution {
  Vector probabilities;
  double temperature = 0.0;  // 0 when produced by epsilon-greedy
};

/// Exactly one of the fields selects the mode; temperature takes precedence.
struct PolicyMode {
  std::optional<double> temperature;
  std::optional<double> epsilon;
};

PolicyDistribution softmax_policy(const Vector& q_values, double temperature);
PolicyDistribution epsilon_greedy_policy(const Vector& q_values, double epsilon);
PolicyDistribution policy_from_q(const QuantileQNet& q, const Vector& obs, PolicyMode mode);
/// Column-wise softmax(Q / temperature) of an |A| x B matrix.
Matrix softmax_columns(const Matrix& q_values, double temperature);

/// y_k = r + gamma (1 - done) theta_k^target(s', a*), a* = argmax mean target Q.
Vector bellman_target_quantiles(const TargetNet& target, const replay::Transition& t,
                                double gamma);
/// Batched targets, K x B. next_obs columns for terminal samples are never read
/// by the network.
Matrix bellman_targets_batch(const QuantileQNet& target, const Matrix& next_obs,
                             const Vector& rewards, const std::vector<bool>& done, double gamma);

struct QuantileLoss {
  double loss = 0.0;
  Vector grad;  // d loss / d predicted
};

/// (1/K) sum_k sum_k' |tau_k - 1{y_k' < theta_k}| * Huber_kappa(y_k' - theta_k) / kappa.
QuantileLoss quantile_huber_loss(const Vector& predicted, const Vector& targets, double kappa);

/// theta_target <- (1 - tau) theta_target + tau theta_online.
void polyak_update(const numkit::DenseNet& online, numkit::DenseNet& target, double tau);
void polyak_update(const QuantileQNet& online, TargetNet& target);

// Versioned per-agent checkpoint blob: "MQNT", u32 version, then layer sizes,
// K, |A|, tau, flat online and target parameters, Adam moments and counters.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct AgentCheckpoint {
  QuantileQNet online;
  TargetNet target;
  numkit::AdamState adam;
};

void write_agent_checkpoint(ByteWriter& out, const AgentCheckpoint& agent);
AgentCheckpoint read_agent_checkpoint(ByteReader& in);

}  // namespace marq::distq
