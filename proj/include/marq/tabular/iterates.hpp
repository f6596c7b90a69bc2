#pragma once

#include <functional>

#include "marq/tabular/mdp.hpp"

namespace marq::tabular {

/// (B*Q)(s, a) = r(s, a) + gamma sum_s' T(s'|s, a) max_a' Q(s', a').
QTable bellman_optimality_backup(const TabularMDP& mdp, const QTable& q);

/// Stationary point of alpha E_{a~policy}[Q] + 1/2 E_{a~data}[(Q - B*Q)^2]:
/// B*Q - alpha * policy(a|s) / data(a|s).
QTable stationary_iterate(const TabularMDP& mdp, const QTable& q, const Eigen::MatrixXd& policy,
                          const Eigen::MatrixXd& data_policy, double alpha);

/// Same-agent case: data gathered under the learner's own policy, so the
/// ratio is one and the result is B*Q - alpha.
QTable penalized_iterate(const TabularMDP& mdp, const QTable& q, const Eigen::MatrixXd& policy,
                         double alpha);

/// Learner updated on the donor's data: B*Q - alpha * pi_learner / pi_donor.
QTable cross_agent_iterate(const TabularMDP& mdp, const QTable& q,
                           const Eigen::MatrixXd& learner_policy,
                           const Eigen::MatrixXd& donor_policy, double alpha);

struct FixedPoint {
  QTable q;
  int iterations = 0;
  double last_change = 0.0;
  bool converged = false;
};

inline constexpr double kConvergenceTol = 1e-12;
inline constexpr int kMaxIterations = 100000;

/// Iterates `step` from q0 until the sup-norm change drops below tol.
FixedPoint iterate_to_fixed_point(const std::function<QTable(const QTable&)>& step,
                                  const QTable& q0, double tol = kConvergenceTol,
                                  int max_iterations = kMaxIterations);

FixedPoint value_iteration(const TabularMDP& mdp, const QTable& q0, double tol = kConvergenceTol,
                           int max_iterations = kMaxIterations);

}  // namespace marq::tabular
