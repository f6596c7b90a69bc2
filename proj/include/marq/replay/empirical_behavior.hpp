#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace marq::replay {

/// Discretized state identity used for the empirical behavior distribution.
struct StateKey {
  std::vector<std::int64_t> cells;

  friend bool operator==(const StateKey&, const StateKey&) = default;
};

struct StateKeyHash {
  std::size_t operator()(const StateKey& k) const noexcept;
};

/// Quantizes each observation entry to round(x / resolution).
StateKey make_state_key(std::span<const double> obs, double resolution);
/// Key for tabular settings where the state is an exact index.
StateKey make_state_key(std::int64_t state_index);

/// Per-state action counts of a dataset; the count ratio is pi_hat_D(a|s).
class EmpiricalBehavior {
 public:
  explicit EmpiricalBehavior(int num_actions);

  void add(const StateKey& key, int action);
  /// Removes one previously added (key, action) occurrence.
  void remove(const StateKey& key, int action);

  int num_actions() const { return num_actions_; }
  bool seen(const StateKey& key) const { return totals_.contains(key); }
  std::int64_t count(const StateKey& key, int action) const;
  std::int64_t state_total(const StateKey& key) const;
  std::size_t num_states() const { return totals_.size(); }

  /// Throws UnseenStateError for a state with no recorded actions.
  double behavior_prob(const StateKey& key, int action) const;
  /// Full distribution; uniform over actions for an unseen state.
  Eigen::VectorXd distribution_or_uniform(const StateKey& key) const;

  friend bool operator==(const EmpiricalBehavior&, const EmpiricalBehavior&) = default;

 private:
  int num_actions_;
  std::unordered_map<StateKey, std::vector<std::int64_t>, StateKeyHash> counts_;
  std::unordered_map<StateKey, std::int64_t, StateKeyHash> totals_;
};

double behavior_prob(const EmpiricalBehavior& eb, const StateKey& key, int action);

}  // namespace marq::replay
