#include "marq/envs/environment.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <unordered_map>

#include "marq/envs/kinds.hpp"
#include "marq/errors.hpp"

namespace marq::envs {

double StepResult::team_reward() const {
  if (rewards.empty()) return 0.0;
  return std::accumulate(rewards.begin(), rewards.end(), 0.0) /
         static_cast<double>(rewards.size());
}

std::vector<Observation> Environment::reset(std::uint64_t seed) {
  reset_impl(seed);
  started_ = true;
  done_ = false;
  elapsed_ = 0;
  return observe();
}

StepResult Environment::step(const std::vector<int>& joint_action) {
  if (!started_) throw LifecycleError("step before reset");
  if (done_) throw LifecycleError("step after the episode finished");
  if (joint_action.size() != static_cast<std::size_t>(spec_.num_agents))
    throw ActionError("joint action must have one entry per agent");
  for (int i = 0; i < spec_.num_agents; ++i)
    if (joint_action[i] < 0 || joint_action[i] >= spec_.action_counts[i])
      throw ActionError("agent " + std::to_string(i) + " action " +
                        std::to_string(joint_action[i]) + " out of range");
  StepResult r;
  bool terminal = false;
  r.rewards = step_impl(joint_action, terminal, r.info);
  for (double& x : r.rewards) x *= spec_.reward_scale;
  ++elapsed_;
  r.done = terminal || elapsed_ >= spec_.episode_limit;
  done_ = r.done;
  r.obs = observe();
  return r;
}

void Environment::save_state(ByteWriter& out) const {
  out.u8(started_ ? 1 : 0);
  out.u8(done_ ? 1 : 0);
  out.i32(elapsed_);
  save_kind_state(out);
}

void Environment::load_state(ByteReader& in) {
  started_ = in.u8() != 0;
  done_ = in.u8() != 0;
  elapsed_ = in.i32();
  if (elapsed_ < 0 || elapsed_ > spec_.episode_limit) throw LoadError("elapsed steps out of range");
  load_kind_state(in);
}

std::unique_ptr<Environment> make_env(const EnvConfig& c) {
  if (c.kind == "matrix_coordination") {
    if (c.num_agents != 2) throw ConfigError("matrix_coordination is a two-agent game");
    return std::make_unique<MatrixCoordination>(c.reward_scale);
  }
  if (c.kind == "grid_spread") {
    const int horizon = c.horizon > 0 ? c.horizon : GridSpread::kDefaultHorizon;
    const int landmarks = c.num_landmarks > 0 ? c.num_landmarks : c.num_agents;
    return std::make_unique<GridSpread>(c.num_agents, landmarks, c.grid_size, c.obs_radius,
                                        horizon, c.reward_scale);
  }
  if (c.kind == "corridor_keepup") {
    if (c.num_agents != 2) throw ConfigError("corridor_keepup is a two-agent game");
    const int horizon = c.horizon > 0 ? c.horizon : CorridorKeepup::kDefaultHorizon;
    return std::make_unique<CorridorKeepup>(c.corridor_length, c.corridor_height,
                                            c.paddle_height, horizon, c.reward_scale);
  }
  throw ConfigError("unknown environment kind '" + c.kind + "'");
}

namespace {

struct Enumerator {
  std::vector<std::vector<int>> joint_actions;
  std::unordered_map<std::string, double> memo;

  double best(const Environment& env, int steps_left) {
    if (steps_left == 0 || env.done()) return 0.0;
    ByteWriter w;
    env.save_state(w);
    w.i32(steps_left);
    std::string key(w.bytes().begin(), w.bytes().end());
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    double result = -std::numeric_limits<double>::infinity();
    for (const auto& joint : joint_actions) {
      auto child = env.clone();
      const StepResult r = child->step(joint);
      result = std::max(result, r.team_reward() + best(*child, steps_left - 1));
    }
    memo.emplace(std::move(key), result);
    return result;
  }
};

}  // namespace

double optimal_return(const Environment& env, std::optional<int> horizon) {
  const std::string kind = env.kind();
  if (kind != "matrix_coordination" && kind != "grid_spread")
    throw CapabilityError("optimal_return does not support " + kind);
  if (env.spec().num_agents > 3) throw CapabilityError("optimal_return supports at most 3 agents");
  if (!env.started()) throw LifecycleError("optimal_return needs a reset environment");
  const int steps = horizon.value_or(env.remaining());
  if (steps < 0) throw ParameterError("negative horizon");
  if (steps > 6) throw CapabilityError("optimal_return supports horizons up to 6");
  if (steps == 0 || env.done()) return 0.0;

  Enumerator e;
  std::vector<int> joint(env.spec().num_agents, 0);
  while (true) {
    e.joint_actions.push_back(joint);
    int i = 0;
    while (i < env.spec().num_agents && ++joint[i] == env.spec().action_counts[i]) joint[i++] = 0;
    if (i == env.spec().num_agents) break;
  }
  return e.best(env, steps);
}

}  // namespace marq::envs
