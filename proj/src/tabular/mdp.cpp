#include "marq/tabular/mdp.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "marq/errors.hpp"

namespace marq::tabular {

void validate(const TabularMDP& mdp) {
  if (mdp.num_states < 1 || mdp.num_states > kMaxStates)
    throw ParameterError("tabular MDPs are limited to 1.." + std::to_string(kMaxStates) +
                         " states");
  if (mdp.num_actions < 1 || mdp.num_actions > kMaxActions)
    throw ParameterError("tabular MDPs are limited to 1.." + std::to_string(kMaxActions) +
                         " actions");
  if (!(mdp.gamma > 0.0 && mdp.gamma < 1.0)) throw ParameterError("gamma must lie in (0, 1)");
  if (mdp.rewards.rows() != mdp.num_states || mdp.rewards.cols() != mdp.num_actions)
    throw ShapeError("reward table shape mismatch");
  if (!mdp.rewards.allFinite()) throw NumericError("rewards must be finite");
  if (mdp.transitions.size() != static_cast<std::size_t>(mdp.num_states * mdp.num_actions))
    throw ShapeError("transition table must have one row per (s, a)");
  for (const auto& row : mdp.transitions) {
    if (row.size() != mdp.num_states) throw ShapeError("transition row length mismatch");
    if ((row.array() < 0.0).any()) throw ParameterError("negative transition probability");
    if (std::abs(row.sum() - 1.0) > 1e-12) throw ParameterError("transition row must sum to 1");
  }
}

TabularMDP random_mdp(int num_states, int num_actions, double gamma, std::mt19937_64& rng) {
  TabularMDP mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.gamma = gamma;
  std::uniform_real_distribution<double> reward(-1.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  mdp.rewards.resize(num_states, num_actions);
  for (int s = 0; s < num_states; ++s)
    for (int a = 0; a < num_actions; ++a) mdp.rewards(s, a) = reward(rng);
  for (int i = 0; i < num_states * num_actions; ++i) {
    Eigen::VectorXd row(num_states);
    for (int s = 0; s < num_states; ++s) row(s) = expo(rng);
    row /= row.sum();
    // Push the rounding residue into the largest entry so the row sums to 1.
    Eigen::Index big;
    row.maxCoeff(&big);
    row(big) += 1.0 - row.sum();
    mdp.transitions.push_back(row);
  }
  validate(mdp);
  return mdp;
}

Eigen::MatrixXd random_positive_policy(int num_states, int num_actions, std::mt19937_64& rng,
                                       double min_prob) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd pi(num_states, num_actions);
  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) pi(s, a) = u(rng) + min_prob;
    pi.row(s) /= pi.row(s).sum();
  }
  return pi;
}

TabularMDP parse_mdp(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    lines.push_back(line);
  }
  if (lines.empty()) throw LoadError("empty MDP description");
  TabularMDP mdp;
  {
    std::istringstream head(lines[0]);
    if (!(head >> mdp.num_states >> mdp.num_actions >> mdp.gamma))
      throw LoadError("MDP header must be: num_states num_actions gamma");
  }
  if (mdp.num_states < 1 || mdp.num_actions < 1) throw LoadError("MDP sizes must be positive");
  const auto expected = static_cast<std::size_t>(mdp.num_states * mdp.num_actions);
  if (lines.size() != expected + 1)
    throw LoadError("expected " + std::to_string(expected) + " (s, a) lines");
  mdp.rewards.resize(mdp.num_states, mdp.num_actions);
  for (std::size_t i = 0; i < expected; ++i) {
    std::istringstream row(lines[i + 1]);
    double r;
    if (!(row >> r)) throw LoadError("missing reward on line " + std::to_string(i + 2));
    Eigen::VectorXd t(mdp.num_states);
    for (int s = 0; s < mdp.num_states; ++s)
      if (!(row >> t(s))) throw LoadError("short transition row on line " + std::to_string(i + 2));
    std::string extra;
    if (row >> extra) throw LoadError("trailing data on line " + std::to_string(i + 2));
    mdp.rewards(static_cast<Eigen::Index>(i) / mdp.num_actions,
                static_cast<Eigen::Index>(i) % mdp.num_actions) = r;
    mdp.transitions.push_back(t);
  }
  try {
    validate(mdp);
  } catch (const Error& e) {
    throw LoadError(std::string("invalid MDP: ") + e.what());
  }
  return mdp;
}

TabularMDP load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_mdp(ss.str());
}

std::string format_mdp(const TabularMDP& mdp) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << mdp.num_states << ' ' << mdp.num_actions << ' ' << mdp.gamma << '\n';
  for (int s = 0; s < mdp.num_states; ++s)
    for (int a = 0; a < mdp.num_actions; ++a) {
      out << mdp.rewards(s, a);
      const auto& row = mdp.next_state_dist(s, a);
      for (int n = 0; n < mdp.num_states; ++n) out << ' ' << row(n);
      out << '\n';
    }
  return out.str();
}

}  // namespace marq::tabular
