#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "marq/envs/environment.hpp"
#include "marq/regularizers/loss.hpp"

namespace marq::trainer {

enum class Algorithm { iql_plain, cql_only, marq_shared, marq_xent };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);

/// Full run specification. Defaults are the reference hyper-parameters, except
/// replay capacity and evaluation episodes, which are reduced for desk-scale runs.
struct TrainerConfig {
  envs::EnvConfig env;
  Algorithm algorithm = Algorithm::marq_shared;
  double alpha = 0.1;
  double lambda = 1.0;
  double gamma = 0.99;
  std::size_t batch_size = 256;
  double learning_rate = 3e-4;
  double tau = 0.005;
  std::size_t buffer_capacity = 100000;
  std::size_t pretraining_steps = 1000;
  std::size_t steps_per_iteration = 1000;
  std::size_t iterations = 20;
  std::vector<int> hidden_sizes{64, 64, 64};
  int num_quantiles = 32;
  double kappa = 1.0;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.2;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t eval_episodes = 100;
  bool parameter_sharing = true;
  regularizers::CqlMode cql_mode = regularizers::CqlMode::expectation;
  regularizers::SignMode sign_mode = regularizers::SignMode::as_written;
  double entropy_floor = 0.05;
  bool include_self_term = true;
  double policy_temperature = 1.0;
  double key_resolution = 1e-3;
};

void validate(const TrainerConfig& config);

/// Effective loss configuration: iql_plain forces alpha = lambda = 0,
/// cql_only forces lambda = 0.
regularizers::RegularizerConfig regularizer_config(const TrainerConfig& config);

/// `key = value` lines, '#' comments, lists comma separated. Keys mirror the
/// TrainerConfig fields; environment fields are prefixed with `env.`.
TrainerConfig parse_config(const std::string& text);
TrainerConfig load_config(const std::string& path);
/// Canonical text form; parse_config(format_config(c)) reproduces c exactly.
std::string format_config(const TrainerConfig& config);

}  // namespace marq::trainer
