#include "marq/regularizers/information.hpp"

#include <algorithm>
#include <cmath>

#include "marq/errors.hpp"

namespace marq::regularizers {

double entropy(const Vector& p) {
  double h = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a)
    if (p(a) > 0.0) h -= p(a) * std::log(p(a));
  return std::max(h, 0.0);
}

double entropy(const distq::PolicyDistribution& p) { return entropy(p.probabilities); }

double kl_divergence(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw ShapeError("KL arguments differ in length");
  double kl = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    if (p(a) <= 0.0) continue;
    if (q(a) <= 0.0) throw SupportError("KL support violation: q(a) = 0 where p(a) > 0");
    kl += p(a) * (std::log(p(a)) - std::log(q(a)));
  }
  return kl;
}

double kl_divergence(const distq::PolicyDistribution& p, const distq::PolicyDistribution& q) {
  return kl_divergence(p.probabilities, q.probabilities);
}

double cross_entropy(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw ShapeError("cross-entropy arguments differ in length");
  double h = 0.0;
  for (Eigen::Index a = 0; a < p.size(); ++a) {
    if (p(a) <= 0.0) continue;
    if (q(a) <= 0.0) throw SupportError("cross-entropy support violation");
    h -= p(a) * std::log(q(a));
  }
  return h;
}

Vector adaptive_entropy_grad(const Vector& p, double alpha, double entropy_floor) {
  if (!(entropy_floor > 0.0)) throw ParameterError("entropy floor must be positive");
  const double scale = -alpha / std::max(entropy(p), entropy_floor);
  return (scale * (p.array().log() + 1.0)).matrix();
}

double raw_importance_ratio(const Vector& learner, const Vector& donor, int action) {
  if (action < 0 || action >= learner.size() || learner.size() != donor.size())
    throw ActionError("importance ratio action out of range");
  if (!(donor(action) > 0.0)) throw SupportError("donor assigns zero probability to the action");
  return learner(action) / donor(action);
}

double importance_ratio(const distq::PolicyDistribution& learner,
                        const distq::PolicyDistribution& donor, int action, double ratio_min,
                        double ratio_max) {
  const double r = raw_importance_ratio(learner.probabilities, donor.probabilities, action);
  return std::clamp(r, ratio_min, ratio_max);
}

Vector importance_weights(const Matrix& learner_policy, const Matrix& donor_policy,
                          const std::vector<int>& actions, double ratio_min, double ratio_max) {
  if (learner_policy.rows() != donor_policy.rows() || learner_policy.cols() != donor_policy.cols() ||
      learner_policy.cols() != static_cast<Eigen::Index>(actions.size()))
    throw ShapeError("policies and actions do not describe the same batch");
  Vector w(learner_policy.cols());
  for (Eigen::Index b = 0; b < w.size(); ++b) {
    const double r = raw_importance_ratio(learner_policy.col(b), donor_policy.col(b), actions[b]);
    w(b) = std::clamp(r, ratio_min, ratio_max);
  }
  return w;
}

}  // namespace marq::regularizers
