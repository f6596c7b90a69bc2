#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <random>
#include <string>
#include <vector>

#include "marq/distq/quantile_net.hpp"
#include "marq/envs/environment.hpp"
#include "marq/regularizers/loss.hpp"
#include "marq/replay/agent_buffer.hpp"
#include "marq/trainer/config.hpp"

namespace marq::trainer {

struct EvalResult {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over episodes
  std::size_t episodes = 0;
};

/// Chooses agent i's action from its own observation.
using ActionSelector = std::function<int(int agent, const envs::Observation& obs)>;

/// Runs `episodes` episodes on a private copy of `env`; episode e resets with a
/// seed drawn from an RNG seeded by `seed`. Returns statistics of the team
/// return (per-step mean over agents, summed over the episode).
EvalResult evaluate(const ActionSelector& policy, const envs::Environment& env,
                    std::size_t episodes, std::uint64_t seed);

struct MetricsRow {
  std::size_t iteration = 0;
  std::size_t env_steps = 0;
  double eval_mean = 0.0;
  double eval_std = 0.0;
  double wall_seconds = 0.0;
  double td_loss = 0.0;
  double cql_loss = 0.0;
  double reg_loss = 0.0;
  std::size_t gradient_steps = 0;
};

/// Fixed CSV header of the metrics file. Wall-clock time is written to a
/// separate timing file so metrics files are reproducible byte for byte.
inline constexpr const char* kMetricsHeader =
    "iteration,env_steps,eval_mean,eval_std,td_loss,cql_loss,reg_loss,gradient_steps";
std::string metrics_csv_line(const MetricsRow& row);

/// One network with its target copy and optimizer state.
struct AgentModel {
  distq::QuantileQNet online;
  distq::TargetNet target;
  numkit::AdamState adam;
};

/// Raised when a loss or gradient becomes non-finite; what() carries a
/// snapshot of the offending update.
class DivergenceError : public NumericError {
  using NumericError::NumericError;
};

/// Independent distributional Q-learners with the configured regularizer.
class Trainer {
 public:
  Trainer(TrainerConfig config, std::uint64_t seed);

  /// Fills the replay buffers with pretraining_steps uniform-random steps.
  void pretrain();
  bool pretrained() const { return env_steps_ >= config_.pretraining_steps; }

  /// steps_per_iteration environment steps, one gradient update per agent per
  /// step, then a greedy evaluation.
  MetricsRow train_iteration();

  EvalResult evaluate(std::size_t episodes) const;
  ActionSelector greedy_selector() const;

  const TrainerConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t env_steps() const { return env_steps_; }
  std::size_t iteration() const { return iteration_; }
  double epsilon() const;
  int num_agents() const { return spec_.num_agents; }
  const std::vector<AgentModel>& models() const { return models_; }
  const AgentModel& model_for(int agent) const;
  const std::vector<replay::AgentBuffer>& buffers() const { return buffers_; }
  const envs::Environment& environment() const { return *env_; }

  /// Learner input: raw observation, plus an agent one-hot when networks are shared.
  numkit::Vector encode(int agent, const envs::Observation& obs) const;

  std::vector<std::uint8_t> save() const;
  static Trainer load(std::span<const std::uint8_t> bytes);
  void save_checkpoint(const std::string& path) const;
  static Trainer load_checkpoint(const std::string& path);

 private:
  struct LossTotals {
    double td = 0.0, cql = 0.0, reg = 0.0;
    std::size_t count = 0;
  };

  void env_step(bool random_actions);
  void update_agent(int agent, LossTotals& totals);
  void apply(int agent, const regularizers::LossBatch& batch,
             const regularizers::RegularizerConfig& reg, LossTotals& totals);
  regularizers::LossBatch make_batch(int learner, const std::vector<replay::Transition>& sample,
                                     const replay::AgentBuffer& source) const;
  numkit::Matrix encode_batch(int agent, const std::vector<replay::Transition>& sample,
                              bool next) const;
  numkit::Matrix policy_on(int agent, const numkit::Matrix& encoded) const;
  AgentModel& mutable_model(int agent);

  TrainerConfig config_;
  std::uint64_t seed_;
  regularizers::RegularizerConfig reg_;
  std::unique_ptr<envs::Environment> env_;
  envs::EnvSpec spec_;
  std::vector<envs::Observation> last_obs_;
  std::vector<AgentModel> models_;
  std::vector<replay::AgentBuffer> buffers_;
  std::mt19937_64 env_rng_;
  std::mt19937_64 explore_rng_;
  std::mt19937_64 sample_rng_;
  std::size_t env_steps_ = 0;
  std::size_t iteration_ = 0;
};

/// Seed of the evaluation stream for a given run seed and iteration; disjoint
/// from every training stream.
std::uint64_t evaluation_seed(std::uint64_t run_seed, std::size_t iteration);

struct RunSummary {
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
  double final_mean = 0.0;
  double final_std = 0.0;
  std::size_t env_steps = 0;
};

/// Pretrains and runs config.iterations iterations. When out_dir is non-empty
/// writes <stem>.csv (metrics), <stem>.timing.csv and <stem>.summary.json,
/// plus <stem>.ckpt with the final trainer state when `checkpoint` is set.
RunSummary run_training(const TrainerConfig& config, std::uint64_t seed,
                        const std::string& out_dir = {}, const std::string& stem = "metrics",
                        bool checkpoint = false);

struct SweepRun {
  double lambda = 0.0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::string metrics_path;
  double final_mean = 0.0;
};

/// One full run per lambda per seed of base.seeds, metrics in
/// out_dir/lambda_<lambda>_seed_<seed>.csv plus sweep_summary.csv. A failing
/// run is recorded and the sweep moves on.
std::vector<SweepRun> run_sweep(const TrainerConfig& base, const std::vector<double>& lambdas,
                                const std::string& out_dir);

}  // namespace marq::trainer
