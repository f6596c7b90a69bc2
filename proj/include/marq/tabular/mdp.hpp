#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace marq::tabular {

using QTable = Eigen::MatrixXd;  // num_states x num_actions

inline constexpr int kMaxStates = 16;
inline constexpr int kMaxActions = 4;

/// Finite MDP small enough for exact dynamic programming.
struct TabularMDP {
  int num_states = 0;
  int num_actions = 0;
  std::vector<Eigen::VectorXd> transitions;  // index s * num_actions + a -> T(.|s, a)
  Eigen::MatrixXd rewards;                   // num_states x num_actions
  double gamma = 0.9;

  const Eigen::VectorXd& next_state_dist(int s, int a) const {
    return transitions[static_cast<std::size_t>(s * num_actions + a)];
  }
};

/// Checks sizes, row-stochastic transitions (1e-12), gamma in (0, 1), finite rewards.
void validate(const TabularMDP& mdp);

/// Uniformly random rewards in [-1, 1] and Dirichlet(1) transition rows.
TabularMDP random_mdp(int num_states, int num_actions, double gamma, std::mt19937_64& rng);

/// Random strictly positive policy, one row per state (each row sums to 1).
Eigen::MatrixXd random_positive_policy(int num_states, int num_actions, std::mt19937_64& rng,
                                       double min_prob = 1e-3);

// Plain-text fixture format:
//   line 1: num_states num_actions gamma
//   then one line per (s, a) in row-major order: reward T(0|s,a) ... T(S-1|s,a)
// Blank lines and lines starting with '#' are ignored.
TabularMDP parse_mdp(const std::string& text);
TabularMDP load_mdp(const std::string& path);
std::string format_mdp(const TabularMDP& mdp);

}  // namespace marq::tabular
