#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "marq/binary_io.hpp"

namespace marq::envs {

using Observation = std::vector<double>;

struct EnvSpec {
  int num_agents = 0;
  std::vector<int> obs_widths;
  std::vector<int> action_counts;
  int episode_limit = 0;
  double reward_scale = 1.0;
};

struct StepResult {
  std::vector<Observation> obs;
  std::vector<double> rewards;
  bool done = false;
  std::map<std::string, double> info;

  /// Mean of the per-agent rewards.
  double team_reward() const;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Configuration shared by all environment kinds; fields a kind does not use
/// are ignored.
struct EnvConfig {
  std::string kind = "matrix_coordination";
  int num_agents = 2;
  int grid_size = 5;
  int num_landmarks = 0;  // 0 means one landmark per agent
  int obs_radius = 2;
  int horizon = 0;        // 0 means the kind's default episode limit
  int corridor_length = 8;
  int corridor_height = 4;
  int paddle_height = 2;
  double reward_scale = 1.0;
};

/// Episodic cooperative environment with per-agent observations.
///
/// Every kind is deterministic given the reset seed and the action sequence.
/// reset() must precede step(); stepping a finished episode is a
/// LifecycleError and an invalid action index is an ActionError.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string kind() const = 0;
  const EnvSpec& spec() const { return spec_; }

  std::vector<Observation> reset(std::uint64_t seed);
  StepResult step(const std::vector<int>& joint_action);

  bool started() const { return started_; }
  bool done() const { return done_; }
  int elapsed() const { return elapsed_; }
  int remaining() const { return spec_.episode_limit - elapsed_; }

  virtual std::vector<Observation> observe() const = 0;
  /// Per-step reward bounds per agent, after reward scaling.
  virtual Range reward_bounds() const = 0;
  /// Bounds of every observation entry.
  virtual Range observation_bounds() const { return {-1.0, 1.0}; }

  virtual std::unique_ptr<Environment> clone() const = 0;

  /// Serializes the full dynamic state (including lifecycle counters).
  void save_state(ByteWriter& out) const;
  void load_state(ByteReader& in);

 protected:
  explicit Environment(EnvSpec spec) : spec_(std::move(spec)) {}

  virtual void reset_impl(std::uint64_t seed) = 0;
  /// Applies validated actions; returns raw (unscaled) rewards and whether the
  /// dynamics terminated the episode before the limit.
  virtual std::vector<double> step_impl(const std::vector<int>& joint_action, bool& terminal,
                                        std::map<std::string, double>& info) = 0;
  virtual void save_kind_state(ByteWriter& out) const = 0;
  virtual void load_kind_state(ByteReader& in) = 0;

  EnvSpec spec_;

 private:
  bool started_ = false;
  bool done_ = false;
  int elapsed_ = 0;
};

std::unique_ptr<Environment> make_env(const EnvConfig& config);

/// Best achievable undiscounted team return (mean over agents) from the
/// environment's current state over `horizon` steps (default: the remaining
/// episode). Exhaustive over joint action sequences with memoization on the
/// exact state. Supported for matrix_coordination and grid_spread with at most
/// 3 agents and horizon at most 6; anything else is a CapabilityError.
double optimal_return(const Environment& env, std::optional<int> horizon = std::nullopt);

}  // namespace marq::envs
