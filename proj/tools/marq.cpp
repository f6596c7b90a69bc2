// Command-line front end: train, eval, sweep, verify.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "marq/errors.hpp"
#include "marq/trainer/trainer.hpp"
#include "marq/verify/checks.hpp"

namespace {

using marq::trainer::TrainerConfig;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string env;
  std::string variant;
  std::optional<double> lambda;
  std::string out_dir = "runs";
};

void add_common(CLI::App* cmd, Common& c, bool with_lambda = true) {
  cmd->add_option("--config", c.config_path, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "run a single seed instead of the config's seed list");
  cmd->add_option("--env", c.env, "matrix_coordination | grid_spread | corridor_keepup");
  cmd->add_option("--variant", c.variant, "iql_plain | cql_only | marq_shared | marq_xent");
  if (with_lambda) cmd->add_option("--lambda", c.lambda, "regularizer weight");
  cmd->add_option("--out-dir", c.out_dir, "output directory");
}

TrainerConfig resolve(const Common& c) {
  TrainerConfig config = c.config_path.empty() ? TrainerConfig{} : marq::trainer::load_config(c.config_path);
  if (!c.env.empty()) config.env.kind = c.env;
  if (!c.variant.empty()) config.algorithm = marq::trainer::parse_algorithm(c.variant);
  if (c.lambda) config.lambda = *c.lambda;
  if (c.seed) config.seeds = {*c.seed};
  marq::trainer::validate(config);
  return config;
}

int cmd_train(const Common& c) {
  const TrainerConfig config = resolve(c);
  std::filesystem::create_directories(c.out_dir);
  std::ofstream(std::filesystem::path(c.out_dir) / "config.txt") << marq::trainer::format_config(config);
  int failures = 0;
  for (std::uint64_t seed : config.seeds) {
    const std::string stem = "seed_" + std::to_string(seed);
    try {
      const auto summary = marq::trainer::run_training(config, seed, c.out_dir, stem, true);
      std::cout << "seed " << seed << ": final mean " << summary.final_mean << " std "
                << summary.final_std << " after " << summary.env_steps << " env steps\n";
    } catch (const marq::Error& e) {
      std::cerr << "seed " << seed << " failed: " << e.what() << '\n';
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}

int cmd_eval(const std::string& checkpoint, std::size_t episodes, std::optional<std::uint64_t> seed) {
  const auto trainer = marq::trainer::Trainer::load_checkpoint(checkpoint);
  const std::size_t n = episodes > 0 ? episodes : trainer.config().eval_episodes;
  const auto eval_seed =
      seed ? *seed : marq::trainer::evaluation_seed(trainer.seed(), trainer.iteration());
  const auto result =
      marq::trainer::evaluate(trainer.greedy_selector(), trainer.environment(), n, eval_seed);
  nlohmann::json j;
  j["checkpoint"] = checkpoint;
  j["iteration"] = trainer.iteration();
  j["env_steps"] = trainer.env_steps();
  j["episodes"] = result.episodes;
  j["mean"] = result.mean;
  j["std"] = result.std;
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_sweep(const Common& c, const std::vector<double>& lambdas) {
  const TrainerConfig config = resolve(c);
  const auto runs = marq::trainer::run_sweep(config, lambdas, c.out_dir);
  int failures = 0;
  for (const auto& r : runs) {
    std::cout << "lambda " << r.lambda << " seed " << r.seed << ": ";
    if (r.ok) {
      std::cout << "final mean " << r.final_mean << '\n';
    } else {
      std::cout << "FAILED " << r.error << '\n';
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}

int cmd_verify(const std::vector<int>& only, bool quick) {
  std::vector<int> ids = only;
  if (ids.empty()) {
    for (int i = 1; i <= marq::verify::kNumChecks; ++i)
      if (!quick || !marq::verify::is_learning_check(i)) ids.push_back(i);
  }
  bool all = true;
  for (int id : ids) {
    const auto r = marq::verify::run_check(id);
    std::cout << marq::verify::format_result(r) << std::endl;
    all = all && r.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regularized independent distributional Q-learning for cooperative agents"};
  app.require_subcommand(1);

  Common train_opts;
  auto* train = app.add_subcommand("train", "train one run per seed, writing metrics and checkpoints");
  add_common(train, train_opts);

  std::string checkpoint;
  std::size_t episodes = 0;
  std::optional<std::uint64_t> eval_seed;
  auto* eval = app.add_subcommand("eval", "greedy evaluation of a saved checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes, "episodes (default: the checkpoint's eval_episodes)");
  eval->add_option("--seed", eval_seed, "evaluation seed");

  Common sweep_opts;
  std::vector<double> lambdas{0.1, 1.0, 10.0};
  auto* sweep = app.add_subcommand("sweep", "lambda ablation: one run per lambda per seed");
  add_common(sweep, sweep_opts, false);
  sweep->add_option("--lambda", lambdas, "lambda values")->delimiter(',');

  std::vector<int> only;
  bool quick = false;
  auto* verify = app.add_subcommand("verify", "run the oracle and property checks");
  verify->add_option("--only", only, "check ids to run")->delimiter(',');
  verify->add_flag("--quick", quick, "skip the training-based checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_opts);
    if (*eval) return cmd_eval(checkpoint, episodes, eval_seed);
    if (*sweep) return cmd_sweep(sweep_opts, lambdas);
    if (*verify) return cmd_verify(only, quick);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
