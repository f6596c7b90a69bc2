#pragma once

#include <string>
#include <vector>

#include "marq/numkit/dense_net.hpp"
#include "marq/regularizers/information.hpp"

namespace marq::regularizers {

enum class Variant { none, shared_experience, cross_entropy };
enum class CqlMode { expectation, logsumexp };
enum class SignMode { as_written, prose };

struct RegularizerConfig {
  double alpha = 0.1;            // CQL trade-off; 0 disables the term
  double lambda = 1.0;           // regularizer weight; 0 disables the term
  Variant variant = Variant::none;
  double entropy_floor = 0.05;
  CqlMode cql_mode = CqlMode::expectation;
  SignMode sign_mode = SignMode::as_written;
  bool include_self_term = true;  // count j == i in the pairwise sum
  double ratio_min = kRatioMin;
  double ratio_max = kRatioMax;
  double kappa = 1.0;
  double policy_temperature = 1.0;
};

void validate(const RegularizerConfig& config);

std::string to_string(Variant v);
std::string to_string(CqlMode m);
std::string to_string(SignMode m);
Variant parse_variant(const std::string& s);
CqlMode parse_cql_mode(const std::string& s);
SignMode parse_sign_mode(const std::string& s);

/// Shape of a quantile head: outputs have actions * quantiles rows.
struct HeadLayout {
  int actions = 0;
  int quantiles = 0;
};

/// A loss term as a function of raw network outputs. `objective` is the scalar
/// whose exact derivative is d_outputs; it differs from `value` only where the
/// entropy gradient is rescaled adaptively.
struct HeadTerm {
  double value = 0.0;
  double objective = 0.0;
  Matrix d_outputs;
};

/// Mean over the batch of quantile_huber_loss(theta(s, a_data), y).
HeadTerm td_term(const Matrix& outputs, HeadLayout layout, const std::vector<int>& actions,
                 const Matrix& target_quantiles, double kappa);

/// expectation: alpha * mean_s [sum_a pi Q - sum_a pi_hat_D Q], pi = softmax(Q / T).
/// logsumexp:   alpha * mean_s [logsumexp_a Q - Q(s, a_data)].
HeadTerm cql_term(const Matrix& outputs, HeadLayout layout, const std::vector<int>& actions,
                  const Matrix& behavior, double alpha, CqlMode mode, double temperature);

/// lambda * mean [ w * |V_i(s) - y| ] with V_i = sum_a pi_i Q. The weights w
/// (clipped learner/donor importance ratios) and the targets y are held fixed.
HeadTerm shared_experience_term(const Matrix& outputs, HeadLayout layout,
                                const Vector& importance_weights, const Vector& value_targets,
                                const RegularizerConfig& config);

/// lambda * mean_s sum_j [ H(pi_i) + KL(pi_i || pi_j) ] over peers j (plus the
/// j == i entropy term when enabled). The entropy part is negated in prose
/// sign mode and its gradient uses adaptive_entropy_grad.
HeadTerm cross_entropy_term(const Matrix& outputs, HeadLayout layout,
                            const std::vector<Matrix>& peer_policies,
                            const RegularizerConfig& config);

/// V(s) = sum_a softmax(Q / T)(a) Q(s, a) for each column.
Vector state_values(const Matrix& q_values, double temperature);

/// y = r + gamma (1 - done) V(s') from the given (frozen) network.
Vector value_targets(const distq::QuantileQNet& net, const Matrix& next_obs,
                     const Vector& rewards, const std::vector<bool>& done, double gamma,
                     double temperature);

/// Everything a learner's loss needs besides its own parameters. All matrices
/// hold one column per sample; everything here is gradient-isolated.
struct LossBatch {
  Matrix obs;                         // encoded for the learner
  std::vector<int> actions;
  Matrix td_targets;                  // K x B
  Matrix behavior;                    // |A| x B, pi_hat_D(.|s) of the sampled dataset
  Vector importance_weights;          // B, shared-experience only
  Vector value_targets;               // B, shared-experience only
  std::vector<Matrix> peer_policies;  // each |A| x B, cross-entropy only (peers j != i)

  std::size_t size() const { return actions.size(); }
};

struct LossReport {
  double value = 0.0;
  double objective = 0.0;  // exact potential of `grad`
  double td = 0.0;
  double cql = 0.0;
  double regularizer = 0.0;
  numkit::GradBundle grad;
};

/// TD quantile-Huber + CQL + the configured variant's penalty, with gradients
/// from one backward pass. Terms with a zero coefficient are skipped entirely.
LossReport total_loss(const distq::QuantileQNet& learner, const LossBatch& batch,
                      const RegularizerConfig& config);

/// Network-level entry points for the individual penalties. The
/// shared-experience penalty computes its importance weights from the
/// learner's current policy and treats them as constants.
struct PenaltyResult {
  double value = 0.0;
  double objective = 0.0;
  numkit::GradBundle grad;
};

PenaltyResult cql_penalty(const distq::QuantileQNet& q, const Matrix& obs,
                          const std::vector<int>& actions, const Matrix& behavior, double alpha,
                          CqlMode mode, double temperature = 1.0);
PenaltyResult shared_experience_penalty(const distq::QuantileQNet& learner, const Matrix& obs,
                                        const std::vector<int>& actions,
                                        const Matrix& donor_policy, const Vector& value_targets,
                                        const RegularizerConfig& config);
PenaltyResult cross_entropy_penalty(const distq::QuantileQNet& learner, const Matrix& obs,
                                    const std::vector<Matrix>& peer_policies,
                                    const RegularizerConfig& config);

}  // namespace marq::regularizers
