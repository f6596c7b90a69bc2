#include "marq/trainer/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "marq/errors.hpp"
#include "marq/numkit/adam.hpp"
#include "marq/regularizers/information.hpp"

namespace marq::trainer {
namespace {

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(id * 0x1000193ULL + 17)));
}

enum StreamId : std::uint64_t { kInit = 1, kEnv = 2, kExplore = 3, kSample = 4, kEval = 5 };

std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream o;
  o << rng;
  return o.str();
}

void restore_rng(std::mt19937_64& rng, const std::string& state) {
  std::istringstream in(state);
  in >> rng;
  if (!in) throw LoadError("corrupt RNG state");
}

constexpr char kMagic[8] = {'M', 'A', 'R', 'Q', 'T', 'R', 'N', '1'};
constexpr std::uint32_t kTrainerVersion = 1;

}  // namespace

std::string metrics_csv_line(const MetricsRow& r) {
  return std::to_string(r.iteration) + ',' + std::to_string(r.env_steps) + ',' +
         fmt(r.eval_mean) + ',' + fmt(r.eval_std) + ',' + fmt(r.td_loss) + ',' +
         fmt(r.cql_loss) + ',' + fmt(r.reg_loss) + ',' + std::to_string(r.gradient_steps);
}

std::uint64_t evaluation_seed(std::uint64_t run_seed, std::size_t iteration) {
  return splitmix64(splitmix64(run_seed ^ (kEval << 56)) + iteration);
}

EvalResult evaluate(const ActionSelector& policy, const envs::Environment& env,
                    std::size_t episodes, std::uint64_t seed) {
  if (episodes == 0) throw ParameterError("evaluation needs at least one episode");
  std::mt19937_64 rng(seed);
  std::vector<double> returns;
  returns.reserve(episodes);
  const int n = env.spec().num_agents;
  for (std::size_t e = 0; e < episodes; ++e) {
    auto sim = env.clone();
    auto obs = sim->reset(rng());
    double total = 0.0;
    while (!sim->done()) {
      std::vector<int> joint(n);
      for (int i = 0; i < n; ++i) joint[i] = policy(i, obs[i]);
      auto r = sim->step(joint);
      total += r.team_reward();
      obs = std::move(r.obs);
    }
    returns.push_back(total);
  }
  EvalResult out;
  out.episodes = episodes;
  for (double r : returns) out.mean += r;
  out.mean /= static_cast<double>(episodes);
  double var = 0.0;
  for (double r : returns) var += (r - out.mean) * (r - out.mean);
  out.std = std::sqrt(var / static_cast<double>(episodes));
  return out;
}

Trainer::Trainer(TrainerConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      seed_(seed),
      env_rng_(stream(seed, kEnv)),
      explore_rng_(stream(seed, kExplore)),
      sample_rng_(stream(seed, kSample)) {
  validate(config_);
  reg_ = regularizer_config(config_);
  env_ = envs::make_env(config_.env);
  spec_ = env_->spec();
  for (int i = 1; i < spec_.num_agents; ++i) {
    if (spec_.obs_widths[i] != spec_.obs_widths[0] ||
        spec_.action_counts[i] != spec_.action_counts[0])
      throw ConfigError("all agents must share observation width and action count");
  }
  const int width = spec_.obs_widths[0] + (config_.parameter_sharing ? spec_.num_agents : 0);
  const int actions = spec_.action_counts[0];
  auto init = stream(seed, kInit);
  const int nets = config_.parameter_sharing ? 1 : spec_.num_agents;
  numkit::AdamConfig adam;
  adam.learning_rate = config_.learning_rate;
  for (int m = 0; m < nets; ++m) {
    auto online =
        distq::make_quantile_qnet(width, config_.hidden_sizes, actions, config_.num_quantiles, init);
    auto target = distq::make_target(online, config_.tau);
    auto state = numkit::AdamState::for_net(online.net, adam);
    models_.push_back(AgentModel{std::move(online), std::move(target), std::move(state)});
  }
  for (int i = 0; i < spec_.num_agents; ++i)
    buffers_.emplace_back(i, config_.buffer_capacity, actions, config_.key_resolution);
}

const AgentModel& Trainer::model_for(int agent) const {
  return models_.at(config_.parameter_sharing ? 0 : static_cast<std::size_t>(agent));
}

AgentModel& Trainer::mutable_model(int agent) {
  return models_.at(config_.parameter_sharing ? 0 : static_cast<std::size_t>(agent));
}

numkit::Vector Trainer::encode(int agent, const envs::Observation& obs) const {
  const auto width = static_cast<Eigen::Index>(obs.size());
  numkit::Vector x = numkit::Vector::Zero(width + (config_.parameter_sharing ? spec_.num_agents : 0));
  x.head(width) = Eigen::Map<const numkit::Vector>(obs.data(), width);
  if (config_.parameter_sharing) x(width + agent) = 1.0;
  return x;
}

numkit::Matrix Trainer::encode_batch(int agent, const std::vector<replay::Transition>& sample,
                                     bool next) const {
  const int width = model_for(agent).online.input_width();
  numkit::Matrix x(width, static_cast<Eigen::Index>(sample.size()));
  for (std::size_t b = 0; b < sample.size(); ++b)
    x.col(static_cast<Eigen::Index>(b)) = encode(agent, next ? sample[b].next_obs : sample[b].obs);
  return x;
}

numkit::Matrix Trainer::policy_on(int agent, const numkit::Matrix& encoded) const {
  return distq::softmax_columns(distq::mean_q_batch(model_for(agent).online, encoded),
                                config_.policy_temperature);
}

double Trainer::epsilon() const {
  if (env_steps_ < config_.pretraining_steps) return 1.0;
  const double trained = static_cast<double>(env_steps_ - config_.pretraining_steps);
  const double horizon = config_.epsilon_decay_fraction *
                         static_cast<double>(config_.iterations * config_.steps_per_iteration);
  const double frac = horizon > 0.0 ? std::min(1.0, trained / horizon) : 1.0;
  return config_.epsilon_start + (config_.epsilon_end - config_.epsilon_start) * frac;
}

void Trainer::env_step(bool random_actions) {
  if (!env_->started() || env_->done()) last_obs_ = env_->reset(env_rng_());
  const int n = spec_.num_agents;
  std::vector<int> joint(n);
  const double eps = epsilon();
  for (int i = 0; i < n; ++i) {
    std::uniform_int_distribution<int> any(0, spec_.action_counts[i] - 1);
    if (random_actions) {
      joint[i] = any(explore_rng_);
      continue;
    }
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(explore_rng_) < eps) {
      joint[i] = any(explore_rng_);
    } else {
      joint[i] = distq::greedy_action(distq::mean_q(model_for(i).online, encode(i, last_obs_[i])));
    }
  }
  envs::StepResult r = env_->step(joint);
  for (int i = 0; i < n; ++i) {
    buffers_[i].push(replay::Transition{i, last_obs_[i], joint[i], r.rewards[i], r.obs[i], r.done});
  }
  last_obs_ = std::move(r.obs);
  ++env_steps_;
}

void Trainer::pretrain() {
  while (env_steps_ < config_.pretraining_steps) env_step(true);
}

regularizers::LossBatch Trainer::make_batch(int learner,
                                            const std::vector<replay::Transition>& sample,
                                            const replay::AgentBuffer& source) const {
  regularizers::LossBatch batch;
  const auto count = static_cast<Eigen::Index>(sample.size());
  batch.obs = encode_batch(learner, sample, false);
  numkit::Vector rewards(count);
  std::vector<bool> done(sample.size());
  for (std::size_t b = 0; b < sample.size(); ++b) {
    batch.actions.push_back(sample[b].action);
    rewards(static_cast<Eigen::Index>(b)) = sample[b].reward;
    done[b] = sample[b].done;
  }
  const numkit::Matrix next = encode_batch(learner, sample, true);
  batch.td_targets =
      distq::bellman_targets_batch(model_for(learner).target.net, next, rewards, done, config_.gamma);
  if (reg_.alpha != 0.0 && reg_.cql_mode == regularizers::CqlMode::expectation) {
    batch.behavior.resize(source.num_actions(), count);
    for (std::size_t b = 0; b < sample.size(); ++b)
      batch.behavior.col(static_cast<Eigen::Index>(b)) =
          source.behavior().distribution_or_uniform(source.key_of(sample[b].obs));
  }
  if (reg_.variant == regularizers::Variant::shared_experience && reg_.lambda != 0.0 &&
      source.agent_id() != learner) {
    const numkit::Matrix donor = policy_on(source.agent_id(), encode_batch(source.agent_id(), sample, false));
    batch.importance_weights = regularizers::importance_weights(
        policy_on(learner, batch.obs), donor, batch.actions, reg_.ratio_min, reg_.ratio_max);
    batch.value_targets = regularizers::value_targets(model_for(learner).target.net, next, rewards,
                                                      done, config_.gamma,
                                                      config_.policy_temperature);
  }
  return batch;
}

void Trainer::apply(int agent, const regularizers::LossBatch& batch,
                    const regularizers::RegularizerConfig& reg, LossTotals& totals) {
  AgentModel& model = mutable_model(agent);
  regularizers::LossReport report;
  const auto diverged = [&](const std::string& why) {
    std::ostringstream snap;
    snap << "non-finite update (" << why << "): agent=" << agent << " env_steps=" << env_steps_
         << " iteration=" << iteration_ << " td=" << report.td << " cql=" << report.cql
         << " reg=" << report.regularizer << " adam_steps=" << model.adam.step_count
         << " params_finite=" << (numkit::all_finite(model.online.net) ? "yes" : "no");
    return DivergenceError(snap.str());
  };
  try {
    report = regularizers::total_loss(model.online, batch, reg);
  } catch (const NumericError& e) {
    throw diverged(e.what());
  }
  if (!std::isfinite(report.value) || !report.grad.all_finite()) throw diverged("loss");
  numkit::adam_step(model.online.net, report.grad, model.adam);
  if (!numkit::all_finite(model.online.net)) throw diverged("parameters");
  distq::polyak_update(model.online, model.target);
  totals.td += report.td;
  totals.cql += report.cql;
  totals.reg += report.regularizer;
  ++totals.count;
}

void Trainer::update_agent(int agent, LossTotals& totals) {
  const auto own = replay::sample_batch(buffers_[agent], config_.batch_size, sample_rng_);
  regularizers::LossBatch batch = make_batch(agent, own, buffers_[agent]);
  regularizers::RegularizerConfig own_reg = reg_;
  if (reg_.variant == regularizers::Variant::shared_experience)
    own_reg.variant = regularizers::Variant::none;
  if (reg_.variant == regularizers::Variant::cross_entropy && reg_.lambda != 0.0) {
    for (int j = 0; j < spec_.num_agents; ++j)
      if (j != agent) batch.peer_policies.push_back(policy_on(j, encode_batch(j, own, false)));
  }
  apply(agent, batch, own_reg, totals);

  if (reg_.variant == regularizers::Variant::shared_experience && reg_.lambda != 0.0) {
    for (int donor = 0; donor < spec_.num_agents; ++donor) {
      if (donor == agent) continue;
      const auto cross =
          replay::sample_cross(buffers_, agent, donor, config_.batch_size, sample_rng_);
      apply(agent, make_batch(agent, cross.transitions, buffers_[donor]), reg_, totals);
    }
  }
}

MetricsRow Trainer::train_iteration() {
  if (!pretrained()) pretrain();
  const auto start = std::chrono::steady_clock::now();
  LossTotals totals;
  for (std::size_t s = 0; s < config_.steps_per_iteration; ++s) {
    try {
      env_step(false);
      for (int i = 0; i < spec_.num_agents; ++i) update_agent(i, totals);
    } catch (const DivergenceError&) {
      throw;
    } catch (const NumericError& e) {
      // non-finite values surfacing outside the loss (action selection, batch building)
      throw DivergenceError(std::string("non-finite training state: ") + e.what() +
                            " env_steps=" + std::to_string(env_steps_) +
                            " iteration=" + std::to_string(iteration_));
    }
  }
  ++iteration_;
  const EvalResult eval = evaluate(config_.eval_episodes);
  MetricsRow row;
  row.iteration = iteration_;
  row.env_steps = env_steps_;
  row.eval_mean = eval.mean;
  row.eval_std = eval.std;
  row.gradient_steps = totals.count;
  if (totals.count > 0) {
    const double n = static_cast<double>(totals.count);
    row.td_loss = totals.td / n;
    row.cql_loss = totals.cql / n;
    row.reg_loss = totals.reg / n;
  }
  row.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

ActionSelector Trainer::greedy_selector() const {
  return [this](int agent, const envs::Observation& obs) {
    return distq::greedy_action(distq::mean_q(model_for(agent).online, encode(agent, obs)));
  };
}

EvalResult Trainer::evaluate(std::size_t episodes) const {
  return trainer::evaluate(greedy_selector(), *env_, episodes, evaluation_seed(seed_, iteration_));
}

std::vector<std::uint8_t> Trainer::save() const {
  ByteWriter w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kTrainerVersion);
  w.str(format_config(config_));
  w.u64(seed_);
  w.u64(env_steps_);
  w.u64(iteration_);
  w.str(rng_state(env_rng_));
  w.str(rng_state(explore_rng_));
  w.str(rng_state(sample_rng_));
  env_->save_state(w);
  w.u32(static_cast<std::uint32_t>(models_.size()));
  for (const auto& m : models_)
    distq::write_agent_checkpoint(w, distq::AgentCheckpoint{m.online, m.target, m.adam});
  w.u32(static_cast<std::uint32_t>(buffers_.size()));
  for (const auto& b : buffers_) replay::write_buffer(w, b);
  const std::uint64_t checksum = fnv1a64(w.bytes());
  w.u64(checksum);
  return w.take();
}

Trainer Trainer::load(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof kMagic + 12) throw LoadError("checkpoint too short");
  const auto body = bytes.first(bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (fnv1a64(body) != stored) throw LoadError("checkpoint checksum mismatch");

  ByteReader in(body);
  char magic[sizeof kMagic];
  in.raw(magic, sizeof magic);
  if (std::string_view(magic, sizeof magic) != std::string_view(kMagic, sizeof kMagic))
    throw LoadError("not a trainer checkpoint");
  const auto version = in.u32();
  if (version != kTrainerVersion)
    throw LoadError("unsupported trainer checkpoint version " + std::to_string(version));
  TrainerConfig config;
  try {
    config = parse_config(in.str());
  } catch (const ConfigError& e) {
    throw LoadError(std::string("embedded config: ") + e.what());
  }
  const auto seed = in.u64();
  Trainer t(config, seed);
  t.env_steps_ = in.u64();
  t.iteration_ = in.u64();
  restore_rng(t.env_rng_, in.str());
  restore_rng(t.explore_rng_, in.str());
  restore_rng(t.sample_rng_, in.str());
  t.env_->load_state(in);
  if (t.env_->started()) t.last_obs_ = t.env_->observe();
  const auto models = in.u32();
  if (models != t.models_.size()) throw LoadError("model count does not match the config");
  for (auto& m : t.models_) {
    auto ck = distq::read_agent_checkpoint(in);
    if (ck.online.net.layer_sizes != m.online.net.layer_sizes)
      throw LoadError("network shape does not match the config");
    m = AgentModel{std::move(ck.online), std::move(ck.target), std::move(ck.adam)};
  }
  const auto buffers = in.u32();
  if (buffers != t.buffers_.size()) throw LoadError("buffer count does not match the config");
  for (auto& b : t.buffers_) b = replay::read_buffer(in);
  if (in.remaining() != 0) throw LoadError("trailing bytes in checkpoint");
  return t;
}

void Trainer::save_checkpoint(const std::string& path) const {
  const auto bytes = save();
  write_file_bytes(path, bytes);
}

Trainer Trainer::load_checkpoint(const std::string& path) { return load(read_file_bytes(path)); }

RunSummary run_training(const TrainerConfig& config, std::uint64_t seed,
                        const std::string& out_dir, const std::string& stem, bool checkpoint) {
  Trainer t(config, seed);
  t.pretrain();
  RunSummary summary;
  summary.seed = seed;
  for (std::size_t it = 0; it < config.iterations; ++it) summary.rows.push_back(t.train_iteration());
  if (!summary.rows.empty()) {
    summary.final_mean = summary.rows.back().eval_mean;
    summary.final_std = summary.rows.back().eval_std;
  }
  summary.env_steps = t.env_steps();

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    const auto base = std::filesystem::path(out_dir) / stem;
    std::ofstream metrics(base.string() + ".csv", std::ios::trunc);
    metrics << kMetricsHeader << '\n';
    for (const auto& r : summary.rows) metrics << metrics_csv_line(r) << '\n';
    std::ofstream timing(base.string() + ".timing.csv", std::ios::trunc);
    timing << "iteration,wall_seconds\n";
    for (const auto& r : summary.rows) timing << r.iteration << ',' << fmt(r.wall_seconds) << '\n';
    nlohmann::json j;
    j["algorithm"] = to_string(config.algorithm);
    j["env"] = config.env.kind;
    j["seed"] = seed;
    j["lambda"] = config.lambda;
    j["alpha"] = config.alpha;
    j["final_mean"] = summary.final_mean;
    j["final_std"] = summary.final_std;
    j["env_steps"] = summary.env_steps;
    j["iterations"] = summary.rows.size();
    std::ofstream(base.string() + ".summary.json", std::ios::trunc) << j.dump(2) << '\n';
    if (!metrics || !timing) throw Error("failed to write metrics under " + out_dir);
    if (checkpoint) t.save_checkpoint(base.string() + ".ckpt");
  }
  return summary;
}

std::vector<SweepRun> run_sweep(const TrainerConfig& base, const std::vector<double>& lambdas,
                                const std::string& out_dir) {
  for (double l : lambdas)
    if (!(l >= 0.0)) throw ConfigError("sweep lambdas must be >= 0");
  std::filesystem::create_directories(out_dir);
  std::vector<SweepRun> runs;
  for (double lambda : lambdas) {
    for (std::uint64_t seed : base.seeds) {
      SweepRun run;
      run.lambda = lambda;
      run.seed = seed;
      const std::string stem = "lambda_" + fmt(lambda) + "_seed_" + std::to_string(seed);
      run.metrics_path = (std::filesystem::path(out_dir) / (stem + ".csv")).string();
      try {
        TrainerConfig config = base;
        config.lambda = lambda;
        const auto summary = run_training(config, seed, out_dir, stem);
        run.final_mean = summary.final_mean;
        run.ok = true;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      runs.push_back(run);
    }
  }
  std::ofstream summary((std::filesystem::path(out_dir) / "sweep_summary.csv").string(),
                        std::ios::trunc);
  summary << "lambda,seed,status,final_mean,metrics,error\n";
  for (const auto& r : runs)
    summary << fmt(r.lambda) << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ','
            << fmt(r.final_mean) << ',' << r.metrics_path << ",\"" << r.error << "\"\n";
  return runs;
}

}  // namespace marq::trainer
