#include "marq/envs/kinds.hpp"

#include <algorithm>
#include <cstdlib>
#include <random>

#include "marq/errors.hpp"

namespace marq::envs {

// ---- matrix_coordination ----

MatrixCoordination::MatrixCoordination(double reward_scale)
    : Environment(EnvSpec{2, {1, 1}, {kActions, kActions}, 1, reward_scale}) {}

std::vector<Observation> MatrixCoordination::observe() const { return {{1.0}, {1.0}}; }

Range MatrixCoordination::reward_bounds() const {
  const double s = spec_.reward_scale;
  return {std::min(-0.5 * s, 1.0 * s), std::max(-0.5 * s, 1.0 * s)};
}

std::unique_ptr<Environment> MatrixCoordination::clone() const {
  return std::make_unique<MatrixCoordination>(*this);
}

std::vector<double> MatrixCoordination::step_impl(const std::vector<int>& a, bool& terminal,
                                                  std::map<std::string, double>& info) {
  const double payoff = kPayoff[a[0]][a[1]];
  terminal = true;
  info["coordinated"] = a[0] == a[1] ? 1.0 : 0.0;
  return {payoff, payoff};
}

// ---- grid_spread ----

namespace {

int manhattan(const Cell& a, const Cell& b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

}  // namespace

GridSpread::GridSpread(int num_agents, int num_landmarks, int grid_size, int obs_radius,
                       int horizon, double reward_scale)
    : Environment(EnvSpec{num_agents, {}, {}, horizon, reward_scale}),
      grid_(grid_size),
      radius_(obs_radius),
      num_landmarks_(num_landmarks) {
  if (num_agents < 1 || num_agents > 4) throw ConfigError("grid_spread supports 1..4 agents");
  if (num_landmarks < 1 || num_landmarks > 4)
    throw ConfigError("grid_spread supports 1..4 landmarks");
  if (grid_size < 2 || grid_size * grid_size < num_agents)
    throw ConfigError("grid too small for the agents");
  if (obs_radius < 0) throw ConfigError("observation radius must be >= 0");
  if (horizon < 1) throw ConfigError("episode limit must be positive");
  const int width = 2 + 2 * num_landmarks + 3 * (num_agents - 1);
  spec_.obs_widths.assign(num_agents, width);
  spec_.action_counts.assign(num_agents, kActions);
}

void GridSpread::reset_impl(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> cells(grid_ * grid_);
  for (int i = 0; i < grid_ * grid_; ++i) cells[i] = i;
  std::shuffle(cells.begin(), cells.end(), rng);
  agents_.clear();
  for (int i = 0; i < spec_.num_agents; ++i) agents_.push_back({cells[i] % grid_, cells[i] / grid_});
  std::shuffle(cells.begin(), cells.end(), rng);
  landmarks_.clear();
  for (int l = 0; l < num_landmarks_; ++l)
    landmarks_.push_back({cells[l] % grid_, cells[l] / grid_});
}

void GridSpread::set_positions(std::vector<Cell> agents, std::vector<Cell> landmarks) {
  if (agents.size() != static_cast<std::size_t>(spec_.num_agents) ||
      landmarks.size() != static_cast<std::size_t>(num_landmarks_))
    throw ShapeError("position counts do not match the environment");
  auto inside = [&](const Cell& c) { return c.x >= 0 && c.y >= 0 && c.x < grid_ && c.y < grid_; };
  if (!std::all_of(agents.begin(), agents.end(), inside) ||
      !std::all_of(landmarks.begin(), landmarks.end(), inside))
    throw ParameterError("position outside the grid");
  agents_ = std::move(agents);
  landmarks_ = std::move(landmarks);
}

double GridSpread::coverage_reward() const {
  double r = 0.0;
  for (const Cell& l : landmarks_) {
    int nearest = 2 * grid_;
    for (const Cell& a : agents_) nearest = std::min(nearest, manhattan(a, l));
    r -= nearest;
  }
  return r;
}

std::vector<Observation> GridSpread::observe() const {
  const double norm = static_cast<double>(grid_ - 1);
  std::vector<Observation> out;
  for (int i = 0; i < spec_.num_agents; ++i) {
    const Cell& me = agents_[i];
    Observation o;
    o.reserve(spec_.obs_widths[i]);
    o.push_back(me.x / norm);
    o.push_back(me.y / norm);
    for (const Cell& l : landmarks_) {
      o.push_back((l.x - me.x) / norm);
      o.push_back((l.y - me.y) / norm);
    }
    for (int j = 0; j < spec_.num_agents; ++j) {
      if (j == i) continue;
      const Cell& other = agents_[j];
      if (manhattan(me, other) <= radius_) {
        o.push_back(1.0);
        o.push_back((other.x - me.x) / norm);
        o.push_back((other.y - me.y) / norm);
      } else {
        o.insert(o.end(), {0.0, 0.0, 0.0});
      }
    }
    out.push_back(std::move(o));
  }
  return out;
}

Range GridSpread::reward_bounds() const {
  const double worst = -static_cast<double>(num_landmarks_) * 2.0 * (grid_ - 1) - 1.0;
  const double s = spec_.reward_scale;
  return {std::min(worst * s, 0.0), std::max(worst * s, 0.0)};
}

std::unique_ptr<Environment> GridSpread::clone() const {
  return std::make_unique<GridSpread>(*this);
}

std::vector<double> GridSpread::step_impl(const std::vector<int>& a, bool& terminal,
                                          std::map<std::string, double>& info) {
  static constexpr int dx[kActions] = {0, 0, 0, -1, 1};
  static constexpr int dy[kActions] = {0, 1, -1, 0, 0};
  for (int i = 0; i < spec_.num_agents; ++i) {
    agents_[i].x = std::clamp(agents_[i].x + dx[a[i]], 0, grid_ - 1);
    agents_[i].y = std::clamp(agents_[i].y + dy[a[i]], 0, grid_ - 1);
  }
  const double team = coverage_reward();
  std::vector<double> rewards(spec_.num_agents, team);
  int collisions = 0;
  for (int i = 0; i < spec_.num_agents; ++i) {
    for (int j = 0; j < spec_.num_agents; ++j) {
      if (i != j && agents_[i] == agents_[j]) {
        rewards[i] -= 1.0;
        ++collisions;
        break;
      }
    }
  }
  terminal = false;
  info["coverage"] = team;
  info["collisions"] = collisions;
  return rewards;
}

void GridSpread::save_kind_state(ByteWriter& out) const {
  for (const Cell& c : agents_) {
    out.i32(c.x);
    out.i32(c.y);
  }
  for (const Cell& c : landmarks_) {
    out.i32(c.x);
    out.i32(c.y);
  }
}

void GridSpread::load_kind_state(ByteReader& in) {
  std::vector<Cell> agents(spec_.num_agents), landmarks(num_landmarks_);
  for (Cell& c : agents) c = {in.i32(), in.i32()};
  for (Cell& c : landmarks) c = {in.i32(), in.i32()};
  try {
    set_positions(std::move(agents), std::move(landmarks));
  } catch (const Error& e) {
    throw LoadError(e.what());
  }
}

// ---- corridor_keepup ----

CorridorKeepup::CorridorKeepup(int length, int height, int paddle_height, int horizon,
                               double reward_scale)
    : Environment(EnvSpec{2, {6, 6}, {kActions, kActions}, horizon, reward_scale}),
      length_(length),
      height_(height),
      paddle_(paddle_height) {
  if (length < 4) throw ConfigError("corridor length must be >= 4");
  if (height < 2) throw ConfigError("corridor height must be >= 2");
  if (paddle_height < 1 || paddle_height > height) throw ConfigError("bad paddle height");
  if (horizon < 1) throw ConfigError("episode limit must be positive");
}

void CorridorKeepup::reset_impl(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> row(0, height_ - 1);
  std::uniform_int_distribution<int> coin(0, 1);
  ball_.x = length_ / 2;
  ball_.y = row(rng);
  ball_.vx = coin(rng) ? 1 : -1;
  ball_.vy = coin(rng) ? 1 : -1;
  const int centre = (height_ - paddle_) / 2;
  paddles_ = {centre, centre};
}

bool CorridorKeepup::covers(int agent, int y) const {
  return y >= paddles_[agent] && y < paddles_[agent] + paddle_;
}

std::vector<Observation> CorridorKeepup::observe() const {
  std::vector<Observation> out;
  const double paddle_norm = height_ > paddle_ ? static_cast<double>(height_ - paddle_) : 1.0;
  for (int i = 0; i < 2; ++i) {
    const bool visible = i == 0 ? ball_.x < length_ / 2 : ball_.x >= length_ / 2;
    Observation o{paddles_[i] / paddle_norm, visible ? 1.0 : 0.0, 0.0, 0.0, 0.0, 0.0};
    if (visible) {
      o[2] = ball_.x / static_cast<double>(length_ - 1);
      o[3] = ball_.y / static_cast<double>(height_ - 1);
      o[4] = ball_.vx;
      o[5] = ball_.vy;
    }
    out.push_back(std::move(o));
  }
  return out;
}

Range CorridorKeepup::reward_bounds() const {
  const double s = spec_.reward_scale * kSurvivalReward;
  return {std::min(0.0, s), std::max(0.0, s)};
}

std::unique_ptr<Environment> CorridorKeepup::clone() const {
  return std::make_unique<CorridorKeepup>(*this);
}

std::vector<double> CorridorKeepup::step_impl(const std::vector<int>& a, bool& terminal,
                                              std::map<std::string, double>& info) {
  for (int i = 0; i < 2; ++i) {
    const int move = a[i] == 1 ? 1 : (a[i] == 2 ? -1 : 0);
    paddles_[i] = std::clamp(paddles_[i] + move, 0, height_ - paddle_);
  }
  int ny = ball_.y + ball_.vy;
  if (ny < 0 || ny >= height_) {
    ball_.vy = -ball_.vy;
    ny = ball_.y + ball_.vy;
  }
  const int nx = ball_.x + ball_.vx;
  ball_.x = nx;
  ball_.y = ny;
  terminal = false;
  info["hit"] = 0.0;
  if (nx == 0 || nx == length_ - 1) {
    const int guard = nx == 0 ? 0 : 1;
    if (!covers(guard, ny)) {
      terminal = true;
      info["miss"] = 1.0;
      return {0.0, 0.0};
    }
    ball_.vx = -ball_.vx;
    info["hit"] = 1.0;
  }
  return {kSurvivalReward, kSurvivalReward};
}

void CorridorKeepup::save_kind_state(ByteWriter& out) const {
  out.i32(ball_.x);
  out.i32(ball_.y);
  out.i32(ball_.vx);
  out.i32(ball_.vy);
  out.i32(paddles_[0]);
  out.i32(paddles_[1]);
}

void CorridorKeepup::load_kind_state(ByteReader& in) {
  ball_ = {in.i32(), in.i32(), in.i32(), in.i32()};
  paddles_ = {in.i32(), in.i32()};
  if (ball_.x < 0 || ball_.x >= length_ || ball_.y < 0 || ball_.y >= height_ ||
      std::abs(ball_.vx) != 1 || std::abs(ball_.vy) != 1)
    throw LoadError("ball state out of range");
  for (int p : paddles_)
    if (p < 0 || p > height_ - paddle_) throw LoadError("paddle state out of range");
}

}  // namespace marq::envs
