#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "marq/errors.hpp"
#include "marq/trainer/trainer.hpp"

using namespace marq;
using namespace marq::trainer;
namespace fs = std::filesystem;

namespace {

TrainerConfig tiny(Algorithm algo = Algorithm::marq_shared) {
  TrainerConfig c;
  c.algorithm = algo;
  c.batch_size = 8;
  c.pretraining_steps = 20;
  c.steps_per_iteration = 20;
  c.iterations = 1;
  c.hidden_sizes = {8};
  c.num_quantiles = 4;
  c.buffer_capacity = 200;
  c.eval_episodes = 3;
  c.seeds = {1, 2};
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("marq_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("config text round trip") {
  TrainerConfig c = tiny(Algorithm::marq_xent);
  c.env.kind = "grid_spread";
  c.env.num_agents = 3;
  c.lambda = 0.1;
  c.gamma = 0.95;
  c.learning_rate = 1.0 / 3.0;
  c.parameter_sharing = false;
  c.cql_mode = regularizers::CqlMode::logsumexp;
  c.sign_mode = regularizers::SignMode::prose;
  const std::string text = format_config(c);
  const TrainerConfig back = parse_config(text);
  CHECK(format_config(back) == text);
  CHECK(back.learning_rate == c.learning_rate);
  CHECK(back.env.num_agents == 3);
  CHECK(back.seeds == c.seeds);
  CHECK(back.hidden_sizes == c.hidden_sizes);
}

TEST_CASE("config parsing errors") {
  CHECK_THROWS_AS(parse_config("nonsense_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("gamma\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("gamma = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("algorithm = bogus\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("batch_size = ten\n"), ConfigError);
  const auto c = parse_config("# comment\n\nlambda = 10 # trailing\nseeds = 3, 4\n");
  CHECK(c.lambda == 10.0);
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
}

TEST_CASE("algorithm presets set the effective coefficients") {
  TrainerConfig c;
  c.alpha = 0.5;
  c.lambda = 2.0;
  c.algorithm = Algorithm::iql_plain;
  CHECK(regularizer_config(c).alpha == 0.0);
  CHECK(regularizer_config(c).lambda == 0.0);
  c.algorithm = Algorithm::cql_only;
  CHECK(regularizer_config(c).alpha == 0.5);
  CHECK(regularizer_config(c).lambda == 0.0);
  c.algorithm = Algorithm::marq_shared;
  CHECK(regularizer_config(c).variant == regularizers::Variant::shared_experience);
  c.algorithm = Algorithm::marq_xent;
  CHECK(regularizer_config(c).variant == regularizers::Variant::cross_entropy);
  for (auto a : {Algorithm::iql_plain, Algorithm::cql_only, Algorithm::marq_shared, Algorithm::marq_xent})
    CHECK(parse_algorithm(to_string(a)) == a);
}

TEST_CASE("uniform random play on the matrix game averages the payoff table") {
  const auto env = envs::make_env(envs::EnvConfig{});
  std::mt19937_64 rng(17);
  const ActionSelector uniform = [&](int, const envs::Observation&) {
    return std::uniform_int_distribution<int>(0, 2)(rng);
  };
  const std::size_t n = 4000;
  const EvalResult r = evaluate(uniform, *env, n, 5);
  const double mean = (1.0 + 0.8 - 0.5 * 7.0) / 9.0;
  const double var = (1.0 + 0.64 + 0.25 * 7.0) / 9.0 - mean * mean;
  CHECK(r.episodes == n);
  CHECK(std::abs(r.mean - mean) < 3.0 * std::sqrt(var / n));
}

TEST_CASE("deterministic policies on a deterministic game have zero spread") {
  const auto env = envs::make_env(envs::EnvConfig{});
  const EvalResult r = evaluate([](int, const envs::Observation&) { return 1; }, *env, 7, 1);
  CHECK(r.mean == doctest::Approx(0.8));
  CHECK(r.std < 1e-12);  // only rounding in the mean
  const EvalResult one = evaluate([](int, const envs::Observation&) { return 0; }, *env, 1, 1);
  CHECK(one.episodes == 1);
  CHECK(one.mean == 1.0);
}

TEST_CASE("epsilon schedule") {
  TrainerConfig c = tiny();
  c.iterations = 4;
  c.steps_per_iteration = 50;
  c.epsilon_decay_fraction = 0.5;
  Trainer t(c, 1);
  CHECK(t.epsilon() == 1.0);
  t.pretrain();
  CHECK(t.epsilon() == 1.0);
  t.train_iteration();
  CHECK(t.epsilon() == doctest::Approx(0.5 * (1.0 + 0.05)));
  t.train_iteration();
  CHECK(t.epsilon() == doctest::Approx(0.05));
}

TEST_CASE("evaluation leaves the training state untouched") {
  Trainer t(tiny(), 3);
  t.pretrain();
  t.train_iteration();
  const auto before = t.save();
  t.evaluate(5);
  CHECK(t.save() == before);
}

TEST_CASE("training is deterministic per seed") {
  for (auto algo : {Algorithm::iql_plain, Algorithm::marq_shared, Algorithm::marq_xent}) {
    Trainer a(tiny(algo), 4), b(tiny(algo), 4);
    a.pretrain();
    b.pretrain();
    const auto ra = a.train_iteration();
    const auto rb = b.train_iteration();
    CHECK(metrics_csv_line(ra) == metrics_csv_line(rb));
    CHECK(a.save() == b.save());
  }
}

TEST_CASE("checkpoint round trip and corruption") {
  Trainer t(tiny(Algorithm::marq_xent), 6);
  t.pretrain();
  t.train_iteration();
  const auto bytes = t.save();
  Trainer back = Trainer::load(bytes);
  CHECK(back.save() == bytes);
  CHECK(back.iteration() == 1);
  CHECK(metrics_csv_line(back.train_iteration()) == metrics_csv_line(t.train_iteration()));

  auto bad = bytes;
  bad.back() ^= 0x01;
  CHECK_THROWS_AS(Trainer::load(bad), LoadError);
  auto cut = bytes;
  cut.resize(cut.size() - 9);
  CHECK_THROWS_AS(Trainer::load(cut), LoadError);
  auto extra = bytes;
  extra.push_back(0);
  CHECK_THROWS_AS(Trainer::load(extra), LoadError);
}

TEST_CASE("shared and separate networks") {
  TrainerConfig c = tiny();
  Trainer shared(c, 1);
  CHECK(shared.models().size() == 1);
  CHECK(shared.encode(1, {1.0}).size() == 3);
  c.parameter_sharing = false;
  Trainer separate(c, 1);
  CHECK(separate.models().size() == 2);
  CHECK(separate.encode(1, {1.0}).size() == 1);
}

TEST_CASE("run_training writes metrics, timing and summary") {
  const auto dir = scratch("run");
  const auto summary = run_training(tiny(), 2, dir.string(), "seed_2", true);
  CHECK(summary.rows.size() == 1);
  std::ifstream csv(dir / "seed_2.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == kMetricsHeader);
  CHECK(fs::exists(dir / "seed_2.timing.csv"));
  CHECK(fs::exists(dir / "seed_2.summary.json"));
  CHECK(Trainer::load_checkpoint((dir / "seed_2.ckpt").string()).env_steps() == summary.env_steps);
  fs::remove_all(dir);
}

TEST_CASE("sweep writes one metrics file per lambda and seed") {
  const auto dir = scratch("sweep");
  const auto runs = run_sweep(tiny(), {0.1, 1.0}, dir.string());
  CHECK(runs.size() == 4);
  int csv = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (const auto name = e.path().filename().string();
        name.rfind("lambda_", 0) == 0 && name.find(".timing") == std::string::npos &&
        e.path().extension() == ".csv") ++csv;
  CHECK(csv == 4);
  CHECK(fs::exists(dir / "sweep_summary.csv"));
  for (const auto& r : runs) CHECK(r.ok);

  const auto zero = run_sweep(tiny(), {0.0}, (dir / "zero").string());
  CHECK(zero.size() == 2);
  for (const auto& r : zero) CHECK(r.ok);
  fs::remove_all(dir);
}

TEST_CASE("an exploding learning rate is reported as divergence") {
  TrainerConfig c = tiny(Algorithm::cql_only);
  c.learning_rate = 1e300;
  c.steps_per_iteration = 50;
  Trainer t(c, 1);
  t.pretrain();
  CHECK_THROWS_AS(t.train_iteration(), DivergenceError);
}

TEST_CASE("metrics lines are fixed-format") {
  MetricsRow row;
  row.iteration = 2;
  row.env_steps = 300;
  row.eval_mean = 0.5;
  row.wall_seconds = 99.0;
  const std::string line = metrics_csv_line(row);
  CHECK(line.rfind("2,300,", 0) == 0);
  CHECK(std::count(line.begin(), line.end(), ',') == 7);
}
