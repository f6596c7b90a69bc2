#include "marq/replay/empirical_behavior.hpp"

#include <cmath>

#include "marq/errors.hpp"

namespace marq::replay {

std::size_t StateKeyHash::operator()(const StateKey& k) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto c : k.cells) {
    h ^= static_cast<std::uint64_t>(c) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return static_cast<std::size_t>(h);
}

StateKey make_state_key(std::span<const double> obs, double resolution) {
  if (!(resolution > 0.0)) throw ParameterError("state key resolution must be positive");
  StateKey k;
  k.cells.reserve(obs.size());
  for (double x : obs) k.cells.push_back(std::llround(x / resolution));
  return k;
}

StateKey make_state_key(std::int64_t state_index) { return StateKey{{state_index}}; }

EmpiricalBehavior::EmpiricalBehavior(int num_actions) : num_actions_(num_actions) {
  if (num_actions < 1) throw ParameterError("behavior needs at least one action");
}

void EmpiricalBehavior::add(const StateKey& key, int action) {
  if (action < 0 || action >= num_actions_) throw ActionError("action out of range");
  auto& row = counts_[key];
  if (row.empty()) row.assign(num_actions_, 0);
  ++row[action];
  ++totals_[key];
}

void EmpiricalBehavior::remove(const StateKey& key, int action) {
  auto it = counts_.find(key);
  if (it == counts_.end() || action < 0 || action >= num_actions_ || it->second[action] == 0)
    throw UnseenStateError("removing a (state, action) pair that was never recorded");
  --it->second[action];
  if (--totals_[key] == 0) {
    totals_.erase(key);
    counts_.erase(it);
  }
}

std::int64_t EmpiricalBehavior::count(const StateKey& key, int action) const {
  auto it = counts_.find(key);
  if (it == counts_.end() || action < 0 || action >= num_actions_) return 0;
  return it->second[action];
}

std::int64_t EmpiricalBehavior::state_total(const StateKey& key) const {
  auto it = totals_.find(key);
  return it == totals_.end() ? 0 : it->second;
}

double EmpiricalBehavior::behavior_prob(const StateKey& key, int action) const {
  auto it = totals_.find(key);
  if (it == totals_.end()) throw UnseenStateError("state never observed in the dataset");
  if (action < 0 || action >= num_actions_) throw ActionError("action out of range");
  return static_cast<double>(counts_.at(key)[action]) / static_cast<double>(it->second);
}

Eigen::VectorXd EmpiricalBehavior::distribution_or_uniform(const StateKey& key) const {
  auto it = counts_.find(key);
  if (it == counts_.end()) return Eigen::VectorXd::Constant(num_actions_, 1.0 / num_actions_);
  const double total = static_cast<double>(totals_.at(key));
  Eigen::VectorXd p(num_actions_);
  for (int a = 0; a < num_actions_; ++a) p(a) = static_cast<double>(it->second[a]) / total;
  return p;
}

double behavior_prob(const EmpiricalBehavior& eb, const StateKey& key, int action) {
  return eb.behavior_prob(key, action);
}

}  // namespace marq::replay
