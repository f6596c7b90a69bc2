#include "marq/regularizers/loss.hpp"

#include <algorithm>
#include <cmath>

#include "marq/errors.hpp"
#include "marq/numkit/softmax.hpp"

namespace marq::regularizers {
namespace {

void check_outputs(const Matrix& outputs, HeadLayout layout, Eigen::Index batch) {
  if (outputs.rows() != layout.actions * layout.quantiles)
    throw ShapeError("outputs do not match the quantile layout");
  if (outputs.cols() != batch) throw ShapeError("outputs and batch differ in size");
  if (batch == 0) throw EmptySourceError("loss over an empty batch");
}

void check_actions(const std::vector<int>& actions, HeadLayout layout) {
  for (int a : actions)
    if (a < 0 || a >= layout.actions) throw ActionError("batch action out of range");
}

// Spreads d/dQbar(a) evenly over the K quantile outputs of action a.
Matrix spread_to_outputs(const Matrix& d_q, HeadLayout layout) {
  Matrix d(layout.actions * layout.quantiles, d_q.cols());
  const double inv_k = 1.0 / static_cast<double>(layout.quantiles);
  for (int a = 0; a < layout.actions; ++a)
    d.middleRows(a * layout.quantiles, layout.quantiles) =
        (d_q.row(a) * inv_k).replicate(layout.quantiles, 1);
  return d;
}

// d/dQ of V = sum softmax(Q / T) Q.
Vector value_grad(const Vector& p, const Vector& q, double v, double temperature) {
  return (p.array() + p.array() * (q.array() - v) / temperature).matrix();
}

double entropy_potential(double h, double floor) {
  return h >= floor ? std::log(h / floor) + 1.0 : h / floor;
}

}  // namespace

void validate(const RegularizerConfig& c) {
  if (!(c.alpha >= 0.0) || !std::isfinite(c.alpha)) throw ConfigError("alpha must be >= 0");
  if (!(c.lambda >= 0.0) || !std::isfinite(c.lambda)) throw ConfigError("lambda must be >= 0");
  if (!(c.entropy_floor > 0.0)) throw ConfigError("entropy_floor must be > 0");
  if (!(c.ratio_min > 0.0 && c.ratio_min <= 1.0 && c.ratio_max >= 1.0))
    throw ConfigError("ratio clip range must bracket 1");
  if (!(c.kappa > 0.0)) throw ConfigError("kappa must be > 0");
  if (!(c.policy_temperature > 0.0)) throw ConfigError("policy temperature must be > 0");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::none: return "none";
    case Variant::shared_experience: return "shared_experience";
    case Variant::cross_entropy: return "cross_entropy";
  }
  return "?";
}

std::string to_string(CqlMode m) {
  return m == CqlMode::expectation ? "expectation" : "logsumexp";
}

std::string to_string(SignMode m) { return m == SignMode::as_written ? "as_written" : "prose"; }

Variant parse_variant(const std::string& s) {
  if (s == "none") return Variant::none;
  if (s == "shared_experience") return Variant::shared_experience;
  if (s == "cross_entropy") return Variant::cross_entropy;
  throw ConfigError("unknown regularizer variant '" + s + "'");
}

CqlMode parse_cql_mode(const std::string& s) {
  if (s == "expectation") return CqlMode::expectation;
  if (s == "logsumexp") return CqlMode::logsumexp;
  throw ConfigError("unknown cql_mode '" + s + "'");
}

SignMode parse_sign_mode(const std::string& s) {
  if (s == "as_written") return SignMode::as_written;
  if (s == "prose") return SignMode::prose;
  throw ConfigError("unknown sign_mode '" + s + "'");
}

HeadTerm td_term(const Matrix& outputs, HeadLayout layout, const std::vector<int>& actions,
                 const Matrix& target_quantiles, double kappa) {
  const auto batch = static_cast<Eigen::Index>(actions.size());
  check_outputs(outputs, layout, batch);
  check_actions(actions, layout);
  if (target_quantiles.rows() != layout.quantiles || target_quantiles.cols() != batch)
    throw ShapeError("TD targets must be K x B");
  const double inv_b = 1.0 / static_cast<double>(batch);
  HeadTerm t;
  t.d_outputs = Matrix::Zero(outputs.rows(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto rows = actions[b] * layout.quantiles;
    const auto ql = distq::quantile_huber_loss(outputs.col(b).segment(rows, layout.quantiles),
                                               target_quantiles.col(b), kappa);
    t.value += ql.loss;
    t.d_outputs.col(b).segment(rows, layout.quantiles) = ql.grad * inv_b;
  }
  t.value *= inv_b;
  t.objective = t.value;
  return t;
}

HeadTerm cql_term(const Matrix& outputs, HeadLayout layout, const std::vector<int>& actions,
                  const Matrix& behavior, double alpha, CqlMode mode, double temperature) {
  const auto batch = static_cast<Eigen::Index>(actions.size());
  check_outputs(outputs, layout, batch);
  check_actions(actions, layout);
  if (mode == CqlMode::expectation &&
      (behavior.rows() != layout.actions || behavior.cols() != batch))
    throw ShapeError("behavior distribution must be |A| x B");
  const Matrix q = distq::mean_q_from_outputs(outputs, layout.actions, layout.quantiles);
  Matrix d_q(layout.actions, batch);
  double total = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto sm = numkit::softmax_logsumexp(q.col(b), temperature);
    if (mode == CqlMode::expectation) {
      const double v = sm.probabilities.dot(q.col(b));
      total += v - behavior.col(b).dot(q.col(b));
      d_q.col(b) = value_grad(sm.probabilities, q.col(b), v, temperature) - behavior.col(b);
    } else {
      total += temperature * sm.logsumexp - q(actions[b], b);
      d_q.col(b) = sm.probabilities;
      d_q(actions[b], b) -= 1.0;
    }
  }
  const double scale = alpha / static_cast<double>(batch);
  HeadTerm t;
  t.value = alpha * (total / static_cast<double>(batch));
  t.objective = t.value;
  t.d_outputs = spread_to_outputs(d_q * scale, layout);
  return t;
}

HeadTerm shared_experience_term(const Matrix& outputs, HeadLayout layout,
                                const Vector& importance_weights, const Vector& value_targets,
                                const RegularizerConfig& config) {
  const auto batch = importance_weights.size();
  check_outputs(outputs, layout, batch);
  if (value_targets.size() != batch) throw ShapeError("value targets do not match the batch");
  if (!(importance_weights.array() >= 0.0).all() || !importance_weights.allFinite())
    throw NumericError("importance weights must be finite and non-negative");
  const double temperature = config.policy_temperature;
  const Matrix q = distq::mean_q_from_outputs(outputs, layout.actions, layout.quantiles);
  Matrix d_q(layout.actions, batch);
  double total = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Vector p = numkit::softmax_logsumexp(q.col(b), temperature).probabilities;
    const double v = p.dot(q.col(b));
    const double residual = v - value_targets(b);
    const double w = importance_weights(b);
    total += w * std::abs(residual);
    const double sign = residual > 0.0 ? 1.0 : (residual < 0.0 ? -1.0 : 0.0);
    d_q.col(b) = w * sign * value_grad(p, q.col(b), v, temperature);
  }
  const double scale = config.lambda / static_cast<double>(batch);
  HeadTerm t;
  t.value = config.lambda * (total / static_cast<double>(batch));
  t.objective = t.value;
  t.d_outputs = spread_to_outputs(d_q * scale, layout);
  return t;
}

HeadTerm cross_entropy_term(const Matrix& outputs, HeadLayout layout,
                            const std::vector<Matrix>& peer_policies,
                            const RegularizerConfig& config) {
  const auto batch = outputs.cols();
  check_outputs(outputs, layout, batch);
  for (const auto& peer : peer_policies)
    if (peer.rows() != layout.actions || peer.cols() != batch)
      throw ShapeError("peer policy must be |A| x B");
  const double temperature = config.policy_temperature;
  const double entropy_terms =
      static_cast<double>(peer_policies.size()) + (config.include_self_term ? 1.0 : 0.0);
  const double sign = config.sign_mode == SignMode::as_written ? 1.0 : -1.0;
  const double entropy_weight = sign * entropy_terms;

  const Matrix q = distq::mean_q_from_outputs(outputs, layout.actions, layout.quantiles);
  Matrix d_q(layout.actions, batch);
  double total = 0.0;
  double potential = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Vector p = numkit::softmax_logsumexp(q.col(b), temperature).probabilities;
    const Vector log_p = p.array().log().matrix();
    const double h = entropy(p);
    double kl_sum = 0.0;
    Vector g = adaptive_entropy_grad(p, entropy_weight, config.entropy_floor);
    for (const auto& peer : peer_policies) {
      const Vector qj = peer.col(b);
      kl_sum += kl_divergence(p, qj);
      g += (log_p.array() - qj.array().log() + 1.0).matrix();
    }
    total += entropy_weight * h + kl_sum;
    potential += entropy_weight * entropy_potential(h, config.entropy_floor) + kl_sum;
    d_q.col(b) = numkit::softmax_vjp(p, g) / temperature;
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  HeadTerm t;
  t.value = config.lambda * (total * inv_b);
  t.objective = config.lambda * (potential * inv_b);
  t.d_outputs = spread_to_outputs(d_q * (config.lambda * inv_b), layout);
  return t;
}

Vector state_values(const Matrix& q_values, double temperature) {
  Vector v(q_values.cols());
  for (Eigen::Index b = 0; b < q_values.cols(); ++b)
    v(b) = numkit::softmax_logsumexp(q_values.col(b), temperature)
               .probabilities.dot(q_values.col(b));
  return v;
}

Vector value_targets(const distq::QuantileQNet& net, const Matrix& next_obs,
                     const Vector& rewards, const std::vector<bool>& done, double gamma,
                     double temperature) {
  const auto batch = rewards.size();
  if (next_obs.cols() != batch || static_cast<Eigen::Index>(done.size()) != batch)
    throw ShapeError("value target inputs disagree in length");
  Vector y = rewards;
  std::vector<Eigen::Index> live;
  for (Eigen::Index b = 0; b < batch; ++b)
    if (!done[b]) live.push_back(b);
  if (live.empty() || gamma == 0.0) return y;
  Matrix obs(next_obs.rows(), static_cast<Eigen::Index>(live.size()));
  for (std::size_t i = 0; i < live.size(); ++i) obs.col(i) = next_obs.col(live[i]);
  const Vector v = state_values(distq::mean_q_batch(net, obs), temperature);
  for (std::size_t i = 0; i < live.size(); ++i) y(live[i]) += gamma * v(i);
  return y;
}

LossReport total_loss(const distq::QuantileQNet& learner, const LossBatch& batch,
                      const RegularizerConfig& config) {
  validate(config);
  if (batch.size() == 0) throw EmptySourceError("total_loss over an empty batch");
  const HeadLayout layout{learner.num_actions, learner.num_quantiles};
  const auto cache = numkit::forward_cached(learner.net, batch.obs);
  const Matrix& outputs = cache.output();

  HeadTerm td = td_term(outputs, layout, batch.actions, batch.td_targets, config.kappa);
  LossReport r;
  r.td = td.value;
  r.value = td.value;
  r.objective = td.objective;
  Matrix d = std::move(td.d_outputs);

  if (config.alpha != 0.0) {
    const HeadTerm cql = cql_term(outputs, layout, batch.actions, batch.behavior, config.alpha,
                                  config.cql_mode, config.policy_temperature);
    r.cql = cql.value;
    r.value += cql.value;
    r.objective += cql.objective;
    d += cql.d_outputs;
  }

  if (config.lambda != 0.0 && config.variant != Variant::none) {
    const HeadTerm reg =
        config.variant == Variant::shared_experience
            ? shared_experience_term(outputs, layout, batch.importance_weights,
                                     batch.value_targets, config)
            : cross_entropy_term(outputs, layout, batch.peer_policies, config);
    r.regularizer = reg.value;
    r.value += reg.value;
    r.objective += reg.objective;
    d += reg.d_outputs;
  }

  r.grad = numkit::backward_batch(learner.net, cache, d);
  return r;
}

namespace {

PenaltyResult to_penalty(const distq::QuantileQNet& q, const numkit::ForwardCache& cache,
                         const HeadTerm& term) {
  return {term.value, term.objective, numkit::backward_batch(q.net, cache, term.d_outputs)};
}

}  // namespace

PenaltyResult cql_penalty(const distq::QuantileQNet& q, const Matrix& obs,
                          const std::vector<int>& actions, const Matrix& behavior, double alpha,
                          CqlMode mode, double temperature) {
  const auto cache = numkit::forward_cached(q.net, obs);
  return to_penalty(q, cache,
                    cql_term(cache.output(), {q.num_actions, q.num_quantiles}, actions, behavior,
                             alpha, mode, temperature));
}

PenaltyResult shared_experience_penalty(const distq::QuantileQNet& learner, const Matrix& obs,
                                        const std::vector<int>& actions,
                                        const Matrix& donor_policy, const Vector& value_targets,
                                        const RegularizerConfig& config) {
  const auto cache = numkit::forward_cached(learner.net, obs);
  const HeadLayout layout{learner.num_actions, learner.num_quantiles};
  check_outputs(cache.output(), layout, static_cast<Eigen::Index>(actions.size()));
  check_actions(actions, layout);
  const Matrix learner_policy = distq::softmax_columns(
      distq::mean_q_from_outputs(cache.output(), layout.actions, layout.quantiles),
      config.policy_temperature);
  const Vector weights = importance_weights(learner_policy, donor_policy, actions,
                                            config.ratio_min, config.ratio_max);
  return to_penalty(learner, cache,
                    shared_experience_term(cache.output(), layout, weights, value_targets, config));
}

PenaltyResult cross_entropy_penalty(const distq::QuantileQNet& learner, const Matrix& obs,
                                    const std::vector<Matrix>& peer_policies,
                                    const RegularizerConfig& config) {
  const auto cache = numkit::forward_cached(learner.net, obs);
  return to_penalty(learner, cache,
                    cross_entropy_term(cache.output(),
                                       {learner.num_actions, learner.num_quantiles},
                                       peer_policies, config));
}

}  // namespace marq::regularizers
