#include "marq/tabular/iterates.hpp"

#include "marq/errors.hpp"

namespace marq::tabular {
namespace {

void check_q(const TabularMDP& mdp, const QTable& q) {
  if (q.rows() != mdp.num_states || q.cols() != mdp.num_actions)
    throw ShapeError("Q table shape does not match the MDP");
}

void check_policy(const TabularMDP& mdp, const Eigen::MatrixXd& pi) {
  if (pi.rows() != mdp.num_states || pi.cols() != mdp.num_actions)
    throw ShapeError("policy shape does not match the MDP");
}

}  // namespace

QTable bellman_optimality_backup(const TabularMDP& mdp, const QTable& q) {
  check_q(mdp, q);
  const Eigen::VectorXd v = q.rowwise().maxCoeff();
  QTable out(mdp.num_states, mdp.num_actions);
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      out(s, a) = mdp.rewards(s, a) + mdp.gamma * mdp.next_state_dist(s, a).dot(v);
  return out;
}

QTable stationary_iterate(const TabularMDP& mdp, const QTable& q, const Eigen::MatrixXd& policy,
                          const Eigen::MatrixXd& data_policy, double alpha) {
  check_policy(mdp, policy);
  check_policy(mdp, data_policy);
  if (!(data_policy.array() > 0.0).all())
    throw SupportError("data policy must be strictly positive");
  QTable out = bellman_optimality_backup(mdp, q);
  if (alpha == 0.0) return out;
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a)
      out(s, a) -= alpha * (policy(s, a) / data_policy(s, a));
  return out;
}

QTable penalized_iterate(const TabularMDP& mdp, const QTable& q, const Eigen::MatrixXd& policy,
                         double alpha) {
  if (!(policy.array() > 0.0).all()) throw SupportError("policy must be strictly positive");
  return stationary_iterate(mdp, q, policy, policy, alpha);
}

QTable cross_agent_iterate(const TabularMDP& mdp, const QTable& q,
                           const Eigen::MatrixXd& learner_policy,
                           const Eigen::MatrixXd& donor_policy, double alpha) {
  if (!(learner_policy.array() > 0.0).all())
    throw SupportError("learner policy must be strictly positive");
  return stationary_iterate(mdp, q, learner_policy, donor_policy, alpha);
}

FixedPoint iterate_to_fixed_point(const std::function<QTable(const QTable&)>& step,
                                  const QTable& q0, double tol, int max_iterations) {
  FixedPoint fp{q0, 0, 0.0, false};
  while (fp.iterations < max_iterations) {
    QTable next = step(fp.q);
    fp.last_change = (next - fp.q).cwiseAbs().maxCoeff();
    fp.q = std::move(next);
    ++fp.iterations;
    if (fp.last_change < tol) {
      fp.converged = true;
      break;
    }
  }
  return fp;
}

FixedPoint value_iteration(const TabularMDP& mdp, const QTable& q0, double tol,
                           int max_iterations) {
  return iterate_to_fixed_point([&](const QTable& q) { return bellman_optimality_backup(mdp, q); },
                                q0, tol, max_iterations);
}

}  // namespace marq::tabular
