#include "marq/verify/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include "marq/binary_io.hpp"
#include "marq/distq/quantile_net.hpp"
#include "marq/envs/environment.hpp"
#include "marq/envs/kinds.hpp"
#include "marq/numkit/grad_check.hpp"
#include "marq/regularizers/information.hpp"
#include "marq/regularizers/loss.hpp"
#include "marq/replay/agent_buffer.hpp"
#include "marq/tabular/iterates.hpp"
#include "marq/trainer/trainer.hpp"

namespace marq::verify {
namespace {

using numkit::Matrix;
using numkit::Vector;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Vector random_simplex(int n, std::mt19937_64& rng, double floor = 0.0) {
  std::exponential_distribution<double> ex(1.0);
  Vector p(n);
  for (int i = 0; i < n; ++i) p(i) = ex(rng) + floor;
  return p / p.sum();
}

Matrix random_simplex_columns(int n, int cols, std::mt19937_64& rng, double floor = 0.0) {
  Matrix m(n, cols);
  for (int c = 0; c < cols; ++c) m.col(c) = random_simplex(n, rng, floor);
  return m;
}

Matrix uniform_matrix(int rows, int cols, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = u(rng);
  return m;
}

int uniform_int(int lo, int hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// ---------------------------------------------------------------------------
// 1: cross-agent iterate exactness and underestimation

tabular::QTable oracle_backup(const tabular::TabularMDP& m, const tabular::QTable& q) {
  tabular::QTable out(m.num_states, m.num_actions);
  for (int s = 0; s < m.num_states; ++s) {
    for (int a = 0; a < m.num_actions; ++a) {
      double expect = 0.0;
      const Vector& t = m.transitions[static_cast<std::size_t>(s * m.num_actions + a)];
      for (int s2 = 0; s2 < m.num_states; ++s2) {
        double best = q(s2, 0);
        for (int a2 = 1; a2 < m.num_actions; ++a2) best = std::max(best, q(s2, a2));
        expect += t(s2) * best;
      }
      out(s, a) = m.rewards(s, a) + m.gamma * expect;
    }
  }
  return out;
}

CheckResult check_cross_agent_iterate() {
  CheckResult r{1, "cross-agent iterate exactness and underestimation", false, {}, 0.0};
  std::mt19937_64 rng(20240601);
  const int kMdps = 120;
  double worst_identity = 0.0;
  double worst_bound = -std::numeric_limits<double>::infinity();
  int not_converged = 0;
  int not_below = 0;
  int cases = 0;
  for (int i = 0; i < kMdps; ++i) {
    const int states = uniform_int(1, tabular::kMaxStates, rng);
    const int actions = uniform_int(1, tabular::kMaxActions, rng);
    const double gamma = std::uniform_real_distribution<double>(0.5, 0.9)(rng);
    const auto mdp = tabular::random_mdp(states, actions, gamma, rng);
    const auto learner = tabular::random_positive_policy(states, actions, rng, 0.02);
    const auto donor = tabular::random_positive_policy(states, actions, rng, 0.02);
    const auto q_star = tabular::value_iteration(mdp, tabular::QTable::Zero(states, actions));
    if (!q_star.converged) ++not_converged;
    for (double alpha : {0.1, 1.0}) {
      ++cases;
      const tabular::QTable q0 = uniform_matrix(states, actions, -2.0, 2.0, rng);
      // identity at a random point and along the iteration
      tabular::QTable q = q0;
      for (int step = 0; step < 5; ++step) {
        const auto got = tabular::cross_agent_iterate(mdp, q, learner, donor, alpha);
        const tabular::QTable want =
            oracle_backup(mdp, q) - alpha * learner.cwiseQuotient(donor);
        worst_identity = std::max(worst_identity, (got - want).cwiseAbs().maxCoeff());
        if (!(got.array() < tabular::bellman_optimality_backup(mdp, q).array()).all()) ++not_below;
        q = got;
      }
      const auto fixed = tabular::iterate_to_fixed_point(
          [&](const tabular::QTable& x) {
            return tabular::cross_agent_iterate(mdp, x, learner, donor, alpha);
          },
          q0);
      if (!fixed.converged) ++not_converged;
      worst_bound = std::max(worst_bound, (fixed.q - q_star.q).maxCoeff());
    }
  }
  r.passed = worst_identity <= 1e-10 && worst_bound <= 0.0 && not_converged == 0 && not_below == 0;
  r.detail = std::to_string(kMdps) + " MDPs, " + std::to_string(cases) +
             " (MDP, alpha) cases; worst |iterate - oracle| " + num(worst_identity) +
             " (tol 1e-10); " + std::to_string(not_below) +
             " iterates not strictly below B*Q; max(Q_cross - Q*) at the fixed point " +
             num(worst_bound) + " (must be <= 0); " + std::to_string(not_converged) +
             " unconverged";
  return r;
}

// ---------------------------------------------------------------------------
// 2: finite-difference fidelity of the full loss

struct ToyProblem {
  distq::QuantileQNet q;
  regularizers::LossBatch batch;
};

ToyProblem make_toy(std::mt19937_64& rng, int peers) {
  const int in = uniform_int(2, 4, rng);
  const int actions = uniform_int(2, 4, rng);
  const int quantiles = uniform_int(2, 5, rng);
  const int batch = uniform_int(3, 6, rng);
  const std::vector<int> hidden{uniform_int(4, 8, rng), uniform_int(4, 8, rng)};
  ToyProblem t{distq::make_quantile_qnet(in, hidden, actions, quantiles, rng), {}};
  auto& b = t.batch;
  b.obs = uniform_matrix(in, batch, -1.0, 1.0, rng);
  for (int i = 0; i < batch; ++i) b.actions.push_back(uniform_int(0, actions - 1, rng));
  b.td_targets = uniform_matrix(quantiles, batch, -2.0, 2.0, rng);
  b.behavior = random_simplex_columns(actions, batch, rng, 0.05);
  b.importance_weights = regularizers::importance_weights(
      random_simplex_columns(actions, batch, rng, 0.05), random_simplex_columns(actions, batch, rng, 0.05),
      b.actions);
  b.value_targets = uniform_matrix(batch, 1, -1.0, 1.0, rng).col(0);
  for (int j = 0; j < peers; ++j)
    b.peer_policies.push_back(random_simplex_columns(actions, batch, rng, 0.05));
  return t;
}

CheckResult check_gradient_fidelity() {
  CheckResult r{2, "finite-difference fidelity of the full loss", false, {}, 0.0};
  std::mt19937_64 rng(777);
  struct Variant {
    const char* name;
    regularizers::Variant variant;
  };
  const Variant variants[] = {{"cql_only", regularizers::Variant::none},
                              {"marq_shared", regularizers::Variant::shared_experience},
                              {"marq_xent", regularizers::Variant::cross_entropy}};
  double worst = 0.0;
  std::string worst_case;
  int checks = 0, failures = 0;
  for (int c = 0; c < 20; ++c) {
    const auto toy = make_toy(rng, uniform_int(1, 2, rng));
    regularizers::RegularizerConfig base;
    base.alpha = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
    base.lambda = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
    base.cql_mode = c % 2 == 0 ? regularizers::CqlMode::expectation : regularizers::CqlMode::logsumexp;
    base.policy_temperature = c % 3 == 0 ? 0.5 : (c % 3 == 1 ? 1.0 : 2.0);
    base.entropy_floor = c % 4 == 3 ? 5.0 : 0.05;
    base.kappa = c % 5 == 4 ? 0.5 : 1.0;
    base.include_self_term = c % 2 == 0;
    for (const auto& v : variants) {
      for (auto sign : {regularizers::SignMode::as_written, regularizers::SignMode::prose}) {
        auto cfg = base;
        cfg.variant = v.variant;
        cfg.sign_mode = sign;
        const numkit::LossFn fn = [&](const numkit::DenseNet& net) {
          distq::QuantileQNet q = toy.q;
          q.net = net;
          auto rep = regularizers::total_loss(q, toy.batch, cfg);
          return numkit::LossAndGrad{rep.objective, std::move(rep.grad)};
        };
        const auto rep = numkit::finite_diff_check(fn, toy.q.net, 1e-4);
        ++checks;
        if (!rep.passed) ++failures;
        if (rep.worst_relative_error > worst) {
          worst = rep.worst_relative_error;
          worst_case = std::string(v.name) + "/" + regularizers::to_string(sign) + " config " +
                       std::to_string(c) + ", analytic " + num(rep.worst_analytic) +
                       " vs numeric " + num(rep.worst_numeric);
        }
      }
    }
  }
  r.passed = failures == 0 && worst < 1e-4;
  r.detail = std::to_string(checks) + " checks over 20 toy configurations; worst relative error " +
             num(worst) + " (" + worst_case + "), tol 1e-4; " + std::to_string(failures) +
             " failed";
  return r;
}

// ---------------------------------------------------------------------------
// 3: entropy / KL / cross-entropy identities

CheckResult check_information_identities() {
  CheckResult r{3, "information-theoretic identities", false, {}, 0.0};
  std::mt19937_64 rng(4242);
  double min_kl = std::numeric_limits<double>::infinity();
  double worst_self = 0.0, worst_identity = 0.0;
  const int kPairs = 10000;
  for (int i = 0; i < kPairs; ++i) {
    const int n = uniform_int(2, 8, rng);
    const Vector p = random_simplex(n, rng);
    const Vector q = random_simplex(n, rng);
    const double kl = regularizers::kl_divergence(p, q);
    min_kl = std::min(min_kl, kl);
    worst_self = std::max(worst_self, std::abs(regularizers::kl_divergence(p, p)));
    worst_identity = std::max(
        worst_identity,
        std::abs(regularizers::cross_entropy(p, q) - regularizers::entropy(p) - kl));
  }
  r.passed = min_kl >= 0.0 && worst_self < 1e-12 && worst_identity <= 1e-12;
  r.detail = std::to_string(kPairs) + " pairs; min KL " + num(min_kl) + "; max KL(p||p) " +
             num(worst_self) + " (tol 1e-12); max |H(p,q) - H(p) - KL| " + num(worst_identity) +
             " (tol 1e-12)";
  return r;
}

// ---------------------------------------------------------------------------
// 4: CQL penalty vanishes when the policy matches the data

CheckResult check_cql_matched_zero() {
  CheckResult r{4, "CQL penalty zero under matched distributions", false, {}, 0.0};
  std::mt19937_64 rng(99);
  double worst = 0.0;
  const int kCases = 200;
  for (int c = 0; c < kCases; ++c) {
    const auto toy = make_toy(rng, 0);
    const double temperature = c % 2 == 0 ? 1.0 : 0.7;
    const double alpha = std::uniform_real_distribution<double>(0.1, 5.0)(rng);
    const Matrix policy = distq::softmax_columns(
        distq::mean_q_batch(toy.q, toy.batch.obs), temperature);
    const auto pen = regularizers::cql_penalty(toy.q, toy.batch.obs, toy.batch.actions, policy,
                                               alpha, regularizers::CqlMode::expectation,
                                               temperature);
    worst = std::max(worst, std::abs(pen.value));
  }
  r.passed = worst < 1e-10;
  r.detail = std::to_string(kCases) + " batches; max |penalty| " + num(worst) + " (tol 1e-10)";
  return r;
}

// ---------------------------------------------------------------------------
// 5: ablation identities

trainer::TrainerConfig small_config(const std::string& env, trainer::Algorithm algorithm) {
  trainer::TrainerConfig c;
  c.env.kind = env;
  c.algorithm = algorithm;
  c.batch_size = 16;
  c.pretraining_steps = 100;
  c.steps_per_iteration = 100;
  c.iterations = 2;
  c.hidden_sizes = {16, 16};
  c.num_quantiles = 8;
  c.buffer_capacity = 500;
  c.eval_episodes = 5;
  return c;
}

std::vector<double> all_parameters(const trainer::Trainer& t) {
  std::vector<double> out;
  for (const auto& m : t.models()) {
    for (const auto* net : {&m.online.net, &m.target.net.net}) {
      const auto flat = numkit::flatten(*net);
      out.insert(out.end(), flat.begin(), flat.end());
    }
  }
  return out;
}

bool same_rows(const std::vector<trainer::MetricsRow>& a, const std::vector<trainer::MetricsRow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (trainer::metrics_csv_line(a[i]) != trainer::metrics_csv_line(b[i])) return false;
  return true;
}

struct RunTrace {
  std::vector<trainer::MetricsRow> rows;
  std::vector<double> params;
};

RunTrace trace(const trainer::TrainerConfig& config, std::uint64_t seed) {
  trainer::Trainer t(config, seed);
  RunTrace out;
  for (std::size_t i = 0; i < config.iterations; ++i) out.rows.push_back(t.train_iteration());
  out.params = all_parameters(t);
  return out;
}

// Distributional analogue of the plain squared TD loss, assembled by hand.
regularizers::LossReport plain_qr_loss(const distq::QuantileQNet& q,
                                       const regularizers::LossBatch& batch, double kappa) {
  const auto cache = numkit::forward_cached(q.net, batch.obs);
  const auto cols = static_cast<Eigen::Index>(batch.size());
  Matrix d = Matrix::Zero(cache.output().rows(), cols);
  const double inv_b = 1.0 / static_cast<double>(cols);
  regularizers::LossReport rep;
  for (Eigen::Index b = 0; b < cols; ++b) {
    const auto row = batch.actions[b] * q.num_quantiles;
    const auto ql = distq::quantile_huber_loss(cache.output().col(b).segment(row, q.num_quantiles),
                                               batch.td_targets.col(b), kappa);
    rep.value += ql.loss;
    d.col(b).segment(row, q.num_quantiles) = ql.grad * inv_b;
  }
  rep.value *= inv_b;
  rep.grad = numkit::backward_batch(q.net, cache, d);
  return rep;
}

CheckResult check_ablation_identities() {
  CheckResult r{5, "ablation identities", false, {}, 0.0};
  using trainer::Algorithm;
  std::vector<std::string> failures;
  int comparisons = 0;
  for (const std::string env : {"matrix_coordination", "grid_spread"}) {
    for (std::uint64_t seed : {3u, 8u}) {
      auto base = small_config(env, Algorithm::cql_only);
      const auto reference = trace(base, seed);
      for (Algorithm a : {Algorithm::marq_shared, Algorithm::marq_xent}) {
        auto c = base;
        c.algorithm = a;
        c.lambda = 0.0;
        const auto got = trace(c, seed);
        ++comparisons;
        if (got.params != reference.params || !same_rows(got.rows, reference.rows))
          failures.push_back(env + "/" + trainer::to_string(a) + "/lambda=0 seed " +
                             std::to_string(seed));
      }
      auto plain = base;
      plain.algorithm = Algorithm::iql_plain;
      const auto iql = trace(plain, seed);
      for (Algorithm a : {Algorithm::cql_only, Algorithm::marq_shared, Algorithm::marq_xent}) {
        auto c = base;
        c.algorithm = a;
        c.alpha = 0.0;
        c.lambda = 0.0;
        const auto got = trace(c, seed);
        ++comparisons;
        if (got.params != iql.params || !same_rows(got.rows, iql.rows))
          failures.push_back(env + "/" + trainer::to_string(a) + "/alpha=lambda=0 seed " +
                             std::to_string(seed));
      }
    }
  }
  // Loss level: zero coefficients leave exactly the quantile regression TD loss.
  std::mt19937_64 rng(5);
  int loss_cases = 0;
  for (int c = 0; c < 50; ++c) {
    const auto toy = make_toy(rng, 2);
    const auto plain = plain_qr_loss(toy.q, toy.batch, 1.0);
    for (auto v : {regularizers::Variant::none, regularizers::Variant::shared_experience,
                   regularizers::Variant::cross_entropy}) {
      regularizers::RegularizerConfig cfg;
      cfg.alpha = 0.0;
      cfg.lambda = 0.0;
      cfg.variant = v;
      const auto rep = regularizers::total_loss(toy.q, toy.batch, cfg);
      ++loss_cases;
      if (rep.value != plain.value || numkit::flatten(rep.grad) != numkit::flatten(plain.grad))
        failures.push_back("loss case " + std::to_string(c) + " " + regularizers::to_string(v));
    }
  }
  r.passed = failures.empty();
  r.detail = std::to_string(comparisons) + " bitwise trainer comparisons, " +
             std::to_string(loss_cases) + " bitwise loss comparisons; " +
             (failures.empty() ? std::string("all identical") : "mismatch: " + failures.front());
  return r;
}

// ---------------------------------------------------------------------------
// 6 and 7: desk-scale learning on the matrix game

trainer::TrainerConfig matrix_config(trainer::Algorithm algorithm) {
  trainer::TrainerConfig c;
  c.env.kind = "matrix_coordination";
  c.algorithm = algorithm;
  return c;
}

double matrix_optimum() {
  auto env = envs::make_env(matrix_config(trainer::Algorithm::marq_xent).env);
  env->reset(0);
  const double enumerated = envs::optimal_return(*env);
  // direct maximum over the payoff table as a cross-check of the enumeration
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& row : envs::MatrixCoordination::kPayoff)
    for (double v : row) best = std::max(best, v);
  if (enumerated != best) throw Error("optimal_return disagrees with the payoff table");
  return enumerated;
}

struct LearningRun {
  bool reached = false;
  std::size_t steps = 0;
  double last_mean = 0.0;
};

// Trains until the greedy evaluation is within `gap` of `optimum` or the
// environment-step budget (pretraining included) is spent.
LearningRun learn_until(const trainer::TrainerConfig& config, std::uint64_t seed, double optimum,
                        double gap, std::size_t budget) {
  trainer::Trainer t(config, seed);
  t.pretrain();
  LearningRun out;
  while (t.env_steps() + config.steps_per_iteration <= budget) {
    const auto row = t.train_iteration();
    out.last_mean = row.eval_mean;
    out.steps = row.env_steps;
    if (row.eval_mean >= optimum - gap) {
      out.reached = true;
      break;
    }
  }
  return out;
}

CheckResult check_desk_learning() {
  CheckResult r{6, "desk-scale learning on the matrix game", false, {}, 0.0};
  using trainer::Algorithm;
  const double optimum = matrix_optimum();
  const double gap = 0.05 * std::abs(optimum);
  const std::size_t budget = 20000;
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::ostringstream detail;
  detail << "optimum " << optimum << ", target >= " << optimum - gap << " within " << budget
         << " env steps;";
  bool ok = true;
  for (Algorithm a : {Algorithm::marq_xent, Algorithm::marq_shared, Algorithm::iql_plain}) {
    int hits = 0;
    double mean_final = 0.0;
    std::ostringstream steps;
    for (std::uint64_t s : seeds) {
      const auto run = learn_until(matrix_config(a), s, optimum, gap, budget);
      hits += run.reached ? 1 : 0;
      mean_final += run.last_mean / static_cast<double>(seeds.size());
      steps << (steps.tellp() > 0 ? "/" : "") << (run.reached ? std::to_string(run.steps) : "-");
    }
    detail << ' ' << trainer::to_string(a) << ' ' << hits << "/5 (steps " << steps.str()
           << ", mean return " << num(mean_final) << ")";
    if (a != Algorithm::iql_plain) ok = ok && hits >= 4;
  }
  detail << "; iql_plain is recorded only";
  r.passed = ok;
  r.detail = detail.str();
  return r;
}

CheckResult check_lambda_insensitivity() {
  CheckResult r{7, "lambda insensitivity of the shared-experience variant", false, {}, 0.0};
  const double optimum = matrix_optimum();
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  std::map<double, double> finals;
  std::ostringstream detail;
  for (double lambda : {0.0, 0.1, 1.0, 10.0}) {
    auto c = matrix_config(trainer::Algorithm::marq_shared);
    c.lambda = lambda;
    c.iterations = 4;
    double mean = 0.0;
    for (std::uint64_t s : seeds) {
      trainer::Trainer t(c, s);
      double last = 0.0;
      for (std::size_t i = 0; i < c.iterations; ++i) last = t.train_iteration().eval_mean;
      mean += last / static_cast<double>(seeds.size());
    }
    finals[lambda] = mean;
    detail << "lambda " << lambda << ": " << num(mean) << "; ";
  }
  double spread = 0.0;
  for (double a : {0.1, 1.0, 10.0})
    for (double b : {0.1, 1.0, 10.0}) spread = std::max(spread, std::abs(finals[a] - finals[b]));
  r.passed = spread < 0.15 * std::abs(optimum);
  detail << "max pairwise gap over {0.1, 1, 10} " << num(spread) << " (tol "
         << num(0.15 * std::abs(optimum)) << ", 5000 env steps, 3 seeds)";
  r.detail = detail.str();
  return r;
}

// ---------------------------------------------------------------------------
// 8: behavior counts survive push/evict churn

CheckResult check_replay_recount() {
  CheckResult r{8, "empirical behavior matches a recount", false, {}, 0.0};
  std::mt19937_64 rng(8);
  const int actions = 4;
  replay::AgentBuffer buffer(0, 97, actions);
  const int kOps = 10000;
  int mismatches = 0, audits = 0;
  auto audit = [&] {
    ++audits;
    std::map<std::vector<std::int64_t>, std::vector<std::int64_t>> recount;
    for (const auto& t : buffer.contents()) {
      auto& row = recount[buffer.key_of(t.obs).cells];
      row.resize(actions, 0);
      ++row[static_cast<std::size_t>(t.action)];
    }
    const auto& eb = buffer.behavior();
    if (eb.num_states() != recount.size()) ++mismatches;
    for (const auto& [cells, counts] : recount) {
      const replay::StateKey key{cells};
      std::int64_t total = 0;
      for (int a = 0; a < actions; ++a) {
        total += counts[static_cast<std::size_t>(a)];
        if (eb.count(key, a) != counts[static_cast<std::size_t>(a)]) ++mismatches;
      }
      if (eb.state_total(key) != total) ++mismatches;
    }
  };
  for (int op = 0; op < kOps; ++op) {
    replay::Transition t;
    t.obs = {static_cast<double>(uniform_int(0, 5, rng)) * 0.25, uniform_int(0, 2, rng) * 0.5};
    t.next_obs = t.obs;
    t.action = uniform_int(0, actions - 1, rng);
    t.reward = 1.0;
    buffer.push(t);
    if (op % 250 == 249) audit();
  }
  audit();
  r.passed = mismatches == 0;
  r.detail = std::to_string(kOps) + " pushes into capacity 97, " + std::to_string(audits) +
             " audits, " + std::to_string(mismatches) + " count mismatches";
  return r;
}

// ---------------------------------------------------------------------------
// 9: determinism and checkpoint resume

std::string read_text(const std::filesystem::path& p) {
  const auto bytes = read_file_bytes(p.string());
  return std::string(bytes.begin(), bytes.end());
}

CheckResult check_determinism_and_resume() {
  CheckResult r{9, "determinism and checkpoint resume", false, {}, 0.0};
  std::vector<std::string> problems;
  const auto root = std::filesystem::temp_directory_path() /
                    ("marq_verify_" + std::to_string(std::random_device{}()));
  for (const std::string env : {"matrix_coordination", "grid_spread", "corridor_keepup"}) {
    auto c = small_config(env, trainer::Algorithm::marq_xent);
    for (int run = 0; run < 2; ++run)
      trainer::run_training(c, 11, (root / env / std::to_string(run)).string(), "m");
    for (const char* suffix : {"m.csv", "m.summary.json"}) {
      if (read_text(root / env / "0" / suffix) != read_text(root / env / "1" / suffix))
        problems.push_back(env + " " + suffix + " differs between identical runs");
    }
  }
  for (auto algorithm : {trainer::Algorithm::marq_shared, trainer::Algorithm::marq_xent}) {
    auto c = small_config("grid_spread", algorithm);
    trainer::Trainer straight(c, 21);
    const auto a1 = straight.train_iteration();
    const auto a2 = straight.train_iteration();

    trainer::Trainer first(c, 21);
    const auto b1 = first.train_iteration();
    const auto path = root / ("resume_" + trainer::to_string(algorithm) + ".ckpt");
    first.save_checkpoint(path.string());
    auto resumed = trainer::Trainer::load_checkpoint(path.string());
    if (resumed.save() != first.save())
      problems.push_back("save -> load -> save is not byte identical");
    const auto b2 = resumed.train_iteration();
    if (!same_rows({a1, a2}, {b1, b2}) || all_parameters(straight) != all_parameters(resumed) ||
        straight.save() != resumed.save())
      problems.push_back(trainer::to_string(algorithm) + " resume diverges from the straight run");
  }
  std::error_code ec;
  std::filesystem::remove_all(root, ec);
  r.passed = problems.empty();
  r.detail = problems.empty()
                 ? "metrics and summaries byte identical on 3 environments; resume over an "
                   "iteration boundary matches parameters, metrics and full state"
                 : problems.front();
  return r;
}

// ---------------------------------------------------------------------------
// 10: quantile loss oracle and Polyak decay

struct OracleLoss {
  double loss = 0.0;
  Vector grad;
};

OracleLoss brute_force_quantile_loss(const Vector& theta, const Vector& y, double kappa) {
  const int k_count = static_cast<int>(theta.size());
  OracleLoss o{0.0, Vector::Zero(k_count)};
  for (int k = 0; k < k_count; ++k) {
    const double tau = (k + 0.5) / k_count;
    for (int j = 0; j < k_count; ++j) {
      const double u = y(j) - theta(k);
      const double indicator = u < 0.0 ? 1.0 : 0.0;
      const double w = std::abs(tau - indicator);
      double rho, drho_du;
      if (std::abs(u) <= kappa) {
        rho = 0.5 * u * u;
        drho_du = u;
      } else {
        rho = kappa * (std::abs(u) - 0.5 * kappa);
        drho_du = u > 0.0 ? kappa : -kappa;
      }
      o.loss += w * rho / kappa / k_count;
      o.grad(k) += -w * drho_du / kappa / k_count;
    }
  }
  return o;
}

CheckResult check_quantile_oracle() {
  CheckResult r{10, "quantile loss oracle and Polyak decay", false, {}, 0.0};
  std::mt19937_64 rng(1010);
  double worst = 0.0;
  const int kPairs = 1000;
  for (int i = 0; i < kPairs; ++i) {
    const int k = uniform_int(1, 64, rng);
    const double kappa = i % 3 == 0 ? 0.5 : (i % 3 == 1 ? 1.0 : 2.0);
    const Vector theta = uniform_matrix(k, 1, -3.0, 3.0, rng).col(0);
    const Vector y = uniform_matrix(k, 1, -3.0, 3.0, rng).col(0);
    const auto got = distq::quantile_huber_loss(theta, y, kappa);
    const auto want = brute_force_quantile_loss(theta, y, kappa);
    worst = std::max(worst, std::abs(got.loss - want.loss));
    worst = std::max(worst, (got.grad - want.grad).cwiseAbs().maxCoeff());
  }

  // Dyadic parameters keep every Polyak step exact in binary floating point,
  // so the target must equal online + (target0 - online) (1 - tau)^n exactly.
  int polyak_mismatches = 0;
  for (double tau : {0.5, 0.25}) {
    numkit::DenseNet online = numkit::make_zero_net({3, 4, 2});
    numkit::DenseNet target = numkit::make_zero_net({3, 4, 2});
    std::vector<double> o = numkit::flatten(online), t0 = o;
    for (std::size_t j = 0; j < o.size(); ++j) {
      o[j] = static_cast<double>(uniform_int(-16, 16, rng)) / 8.0;
      t0[j] = static_cast<double>(uniform_int(-16, 16, rng)) / 8.0;
    }
    numkit::unflatten(online, o);
    numkit::unflatten(target, t0);
    for (int n = 1; n <= 20; ++n) {
      distq::polyak_update(online, target, tau);
      const auto got = numkit::flatten(target);
      for (std::size_t j = 0; j < o.size(); ++j)
        if (got[j] != o[j] + (t0[j] - o[j]) * std::pow(1.0 - tau, n)) ++polyak_mismatches;
    }
  }
  r.passed = worst <= 1e-12 && polyak_mismatches == 0;
  r.detail = std::to_string(kPairs) + " pairs, K in [1, 64]; worst |loss or grad - oracle| " +
             num(worst) + " (tol 1e-12); Polyak decay mismatches over 20 steps x 2 taus: " +
             std::to_string(polyak_mismatches);
  return r;
}

}  // namespace

bool is_learning_check(int id) { return id == 6 || id == 7; }

double time_limit_seconds(int id) {
  switch (id) {
    case 1: return 10.0;
    case 2: return 60.0;
    case 6: return 600.0;
    default: return 0.0;
  }
}

CheckResult run_check(int id) {
  static const std::function<CheckResult()> checks[kNumChecks] = {
      check_cross_agent_iterate,   check_gradient_fidelity,      check_information_identities,
      check_cql_matched_zero,      check_ablation_identities,    check_desk_learning,
      check_lambda_insensitivity,  check_replay_recount,         check_determinism_and_resume,
      check_quantile_oracle};
  if (id < 1 || id > kNumChecks) return {id, "unknown check", false, "no such check id", 0.0};
  const auto start = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = checks[id - 1]();
  } catch (const std::exception& e) {
    r = {id, "check " + std::to_string(id), false, std::string("threw: ") + e.what(), 0.0};
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double limit = time_limit_seconds(id);
  if (limit > 0.0 && r.seconds >= limit) {
    r.passed = false;
    r.detail += "; exceeded the " + num(limit) + " s runtime limit";
  }
  return r;
}

std::string format_result(const CheckResult& r) {
  char secs[32];
  std::snprintf(secs, sizeof secs, "%.1f", r.seconds);
  return "criterion " + std::to_string(r.id) + (r.passed ? " PASS " : " FAIL ") + r.name + " (" +
         secs + "s): " + r.detail;
}

}  // namespace marq::verify
