#include "marq/trainer/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "marq/errors.hpp"

namespace marq::trainer {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::iql_plain: return "iql_plain";
    case Algorithm::cql_only: return "cql_only";
    case Algorithm::marq_shared: return "marq_shared";
    case Algorithm::marq_xent: return "marq_xent";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "iql_plain") return Algorithm::iql_plain;
  if (s == "cql_only") return Algorithm::cql_only;
  if (s == "marq_shared") return Algorithm::marq_shared;
  if (s == "marq_xent") return Algorithm::marq_xent;
  throw ConfigError("unknown algorithm '" + s + "'");
}

void validate(const TrainerConfig& c) {
  if (!(c.gamma > 0.0 && c.gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(c.tau > 0.0 && c.tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  if (c.buffer_capacity == 0) throw ConfigError("buffer_capacity must be positive");
  if (c.pretraining_steps == 0) throw ConfigError("pretraining_steps must be positive");
  if (c.steps_per_iteration == 0) throw ConfigError("steps_per_iteration must be positive");
  for (int h : c.hidden_sizes)
    if (h <= 0) throw ConfigError("hidden sizes must be positive");
  if (c.num_quantiles < 1) throw ConfigError("num_quantiles must be positive");
  if (!(c.epsilon_start >= 0.0 && c.epsilon_start <= 1.0 && c.epsilon_end >= 0.0 &&
        c.epsilon_end <= 1.0))
    throw ConfigError("epsilon schedule must stay within [0, 1]");
  if (!(c.epsilon_decay_fraction > 0.0 && c.epsilon_decay_fraction <= 1.0))
    throw ConfigError("epsilon_decay_fraction must lie in (0, 1]");
  if (c.seeds.empty()) throw ConfigError("at least one seed is required");
  if (c.eval_episodes == 0) throw ConfigError("eval_episodes must be positive");
  if (!(c.key_resolution > 0.0)) throw ConfigError("key_resolution must be positive");
  regularizers::validate(regularizer_config(c));
}

regularizers::RegularizerConfig regularizer_config(const TrainerConfig& c) {
  regularizers::RegularizerConfig r;
  r.alpha = c.algorithm == Algorithm::iql_plain ? 0.0 : c.alpha;
  r.lambda = (c.algorithm == Algorithm::marq_shared || c.algorithm == Algorithm::marq_xent)
                 ? c.lambda
                 : 0.0;
  r.variant = c.algorithm == Algorithm::marq_shared ? regularizers::Variant::shared_experience
              : c.algorithm == Algorithm::marq_xent ? regularizers::Variant::cross_entropy
                                                    : regularizers::Variant::none;
  r.entropy_floor = c.entropy_floor;
  r.cql_mode = c.cql_mode;
  r.sign_mode = c.sign_mode;
  r.include_self_term = c.include_self_term;
  r.kappa = c.kappa;
  r.policy_temperature = c.policy_temperature;
  return r;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("invalid value '" + v + "' for key '" + key + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("invalid boolean '" + v + "' for key '" + key + "'");
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

using Setter = std::function<void(TrainerConfig&, const std::string&, const std::string&)>;

template <class T, class Field>
Setter number(Field field) {
  return [field](TrainerConfig& c, const std::string& k, const std::string& v) {
    field(c) = parse_number<T>(k, v);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"env.kind", [](TrainerConfig& c, auto&, auto& v) { c.env.kind = v; }},
      {"env.num_agents", number<int>([](TrainerConfig& c) -> int& { return c.env.num_agents; })},
      {"env.grid_size", number<int>([](TrainerConfig& c) -> int& { return c.env.grid_size; })},
      {"env.num_landmarks",
       number<int>([](TrainerConfig& c) -> int& { return c.env.num_landmarks; })},
      {"env.obs_radius", number<int>([](TrainerConfig& c) -> int& { return c.env.obs_radius; })},
      {"env.horizon", number<int>([](TrainerConfig& c) -> int& { return c.env.horizon; })},
      {"env.corridor_length",
       number<int>([](TrainerConfig& c) -> int& { return c.env.corridor_length; })},
      {"env.corridor_height",
       number<int>([](TrainerConfig& c) -> int& { return c.env.corridor_height; })},
      {"env.paddle_height",
       number<int>([](TrainerConfig& c) -> int& { return c.env.paddle_height; })},
      {"env.reward_scale",
       number<double>([](TrainerConfig& c) -> double& { return c.env.reward_scale; })},
      {"algorithm",
       [](TrainerConfig& c, auto&, auto& v) { c.algorithm = parse_algorithm(v); }},
      {"alpha", number<double>([](TrainerConfig& c) -> double& { return c.alpha; })},
      {"lambda", number<double>([](TrainerConfig& c) -> double& { return c.lambda; })},
      {"gamma", number<double>([](TrainerConfig& c) -> double& { return c.gamma; })},
      {"batch_size",
       number<std::size_t>([](TrainerConfig& c) -> std::size_t& { return c.batch_size; })},
      {"learning_rate",
       number<double>([](TrainerConfig& c) -> double& { return c.learning_rate; })},
      {"tau", number<double>([](TrainerConfig& c) -> double& { return c.tau; })},
      {"buffer_capacity",
       number<std::size_t>([](TrainerConfig& c) -> std::size_t& { return c.buffer_capacity; })},
      {"pretraining_steps", number<std::size_t>([](TrainerConfig& c) -> std::size_t& {
         return c.pretraining_steps;
       })},
      {"steps_per_iteration", number<std::size_t>([](TrainerConfig& c) -> std::size_t& {
         return c.steps_per_iteration;
       })},
      {"iterations",
       number<std::size_t>([](TrainerConfig& c) -> std::size_t& { return c.iterations; })},
      {"hidden_sizes",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.hidden_sizes.clear();
         for (const auto& item : split_list(v)) c.hidden_sizes.push_back(parse_number<int>(k, item));
       }},
      {"num_quantiles", number<int>([](TrainerConfig& c) -> int& { return c.num_quantiles; })},
      {"kappa", number<double>([](TrainerConfig& c) -> double& { return c.kappa; })},
      {"epsilon_start",
       number<double>([](TrainerConfig& c) -> double& { return c.epsilon_start; })},
      {"epsilon_end", number<double>([](TrainerConfig& c) -> double& { return c.epsilon_end; })},
      {"epsilon_decay_fraction",
       number<double>([](TrainerConfig& c) -> double& { return c.epsilon_decay_fraction; })},
      {"seeds",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.seeds.clear();
         for (const auto& item : split_list(v)) c.seeds.push_back(parse_number<std::uint64_t>(k, item));
       }},
      {"eval_episodes",
       number<std::size_t>([](TrainerConfig& c) -> std::size_t& { return c.eval_episodes; })},
      {"parameter_sharing",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.parameter_sharing = parse_bool(k, v);
       }},
      {"cql_mode",
       [](TrainerConfig& c, auto&, auto& v) { c.cql_mode = regularizers::parse_cql_mode(v); }},
      {"sign_mode",
       [](TrainerConfig& c, auto&, auto& v) { c.sign_mode = regularizers::parse_sign_mode(v); }},
      {"entropy_floor",
       number<double>([](TrainerConfig& c) -> double& { return c.entropy_floor; })},
      {"include_self_term",
       [](TrainerConfig& c, const std::string& k, const std::string& v) {
         c.include_self_term = parse_bool(k, v);
       }},
      {"policy_temperature",
       number<double>([](TrainerConfig& c) -> double& { return c.policy_temperature; })},
      {"key_resolution",
       number<double>([](TrainerConfig& c) -> double& { return c.key_resolution; })},
  };
  return table;
}

}  // namespace

TrainerConfig parse_config(const std::string& text) {
  TrainerConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters().find(key);
    if (it == setters().end())
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->second(c, key, value);
  }
  validate(c);
  return c;
}

TrainerConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const TrainerConfig& c) {
  std::ostringstream o;
  auto join_int = [](const auto& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  o << "env.kind = " << c.env.kind << '\n'
    << "env.num_agents = " << c.env.num_agents << '\n'
    << "env.grid_size = " << c.env.grid_size << '\n'
    << "env.num_landmarks = " << c.env.num_landmarks << '\n'
    << "env.obs_radius = " << c.env.obs_radius << '\n'
    << "env.horizon = " << c.env.horizon << '\n'
    << "env.corridor_length = " << c.env.corridor_length << '\n'
    << "env.corridor_height = " << c.env.corridor_height << '\n'
    << "env.paddle_height = " << c.env.paddle_height << '\n'
    << "env.reward_scale = " << fmt(c.env.reward_scale) << '\n'
    << "algorithm = " << to_string(c.algorithm) << '\n'
    << "alpha = " << fmt(c.alpha) << '\n'
    << "lambda = " << fmt(c.lambda) << '\n'
    << "gamma = " << fmt(c.gamma) << '\n'
    << "batch_size = " << c.batch_size << '\n'
    << "learning_rate = " << fmt(c.learning_rate) << '\n'
    << "tau = " << fmt(c.tau) << '\n'
    << "buffer_capacity = " << c.buffer_capacity << '\n'
    << "pretraining_steps = " << c.pretraining_steps << '\n'
    << "steps_per_iteration = " << c.steps_per_iteration << '\n'
    << "iterations = " << c.iterations << '\n'
    << "hidden_sizes = " << join_int(c.hidden_sizes) << '\n'
    << "num_quantiles = " << c.num_quantiles << '\n'
    << "kappa = " << fmt(c.kappa) << '\n'
    << "epsilon_start = " << fmt(c.epsilon_start) << '\n'
    << "epsilon_end = " << fmt(c.epsilon_end) << '\n'
    << "epsilon_decay_fraction = " << fmt(c.epsilon_decay_fraction) << '\n'
    << "seeds = " << join_int(c.seeds) << '\n'
    << "eval_episodes = " << c.eval_episodes << '\n'
    << "parameter_sharing = " << (c.parameter_sharing ? "true" : "false") << '\n'
    << "cql_mode = " << regularizers::to_string(c.cql_mode) << '\n'
    << "sign_mode = " << regularizers::to_string(c.sign_mode) << '\n'
    << "entropy_floor = " << fmt(c.entropy_floor) << '\n'
    << "include_self_term = " << (c.include_self_term ? "true" : "false") << '\n'
    << "policy_temperature = " << fmt(c.policy_temperature) << '\n'
    << "key_resolution = " << fmt(c.key_resolution) << '\n';
  return o.str();
}

}  // namespace marq::trainer
