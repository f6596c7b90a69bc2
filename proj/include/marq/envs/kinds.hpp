#pragma once

#include <array>
#include <utility>

#include "marq/envs/environment.hpp"

namespace marq::envs {

/// One-shot two-player coordination game over three actions. Payoffs
/// (identical for both agents, row = agent 0, column = agent 1):
///
///          0     1     2
///    0   1.0  -0.5  -0.5
///    1  -0.5   0.8  -0.5
///    2  -0.5  -0.5  -0.5
///
/// (0, 0) is optimal, (1, 1) is the near-optimal trap, every miscoordinated
/// pair costs 0.5. Observation: a single constant feature.
class MatrixCoordination final : public Environment {
 public:
  static constexpr int kActions = 3;
  static constexpr std::array<std::array<double, kActions>, kActions> kPayoff{{
      {1.0, -0.5, -0.5},
      {-0.5, 0.8, -0.5},
      {-0.5, -0.5, -0.5},
  }};

  explicit MatrixCoordination(double reward_scale = 1.0);

  std::string kind() const override { return "matrix_coordination"; }
  std::vector<Observation> observe() const override;
  Range reward_bounds() const override;
  Range observation_bounds() const override { return {0.0, 1.0}; }
  std::unique_ptr<Environment> clone() const override;

 protected:
  void reset_impl(std::uint64_t) override {}
  std::vector<double> step_impl(const std::vector<int>& a, bool& terminal,
                                std::map<std::string, double>& info) override;
  void save_kind_state(ByteWriter&) const override {}
  void load_kind_state(ByteReader&) override {}
};

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Agents on a square grid cover landmarks. Actions: 0 stay, 1 up, 2 down,
/// 3 left, 4 right (moves off the grid are clamped). Every agent receives
/// -sum over landmarks of the Manhattan distance to the nearest agent, minus 1
/// if it shares its cell with another agent after moving.
///
/// Observation of agent i (all entries in [-1, 1]): own position / (G-1),
/// each landmark's offset / (G-1), and for each other agent a visibility flag
/// plus its offset / (G-1) when within Manhattan distance obs_radius (zeros
/// otherwise).
class GridSpread final : public Environment {
 public:
  static constexpr int kActions = 5;
  static constexpr int kDefaultHorizon = 25;

  GridSpread(int num_agents, int num_landmarks, int grid_size, int obs_radius, int horizon,
             double reward_scale = 1.0);

  std::string kind() const override { return "grid_spread"; }
  std::vector<Observation> observe() const override;
  Range reward_bounds() const override;
  std::unique_ptr<Environment> clone() const override;

  const std::vector<Cell>& agents() const { return agents_; }
  const std::vector<Cell>& landmarks() const { return landmarks_; }
  int grid_size() const { return grid_; }
  int obs_radius() const { return radius_; }
  /// Overrides positions after reset (test fixtures and enumeration).
  void set_positions(std::vector<Cell> agents, std::vector<Cell> landmarks);
  /// -sum over landmarks of the distance to the nearest agent.
  double coverage_reward() const;

 protected:
  void reset_impl(std::uint64_t seed) override;
  std::vector<double> step_impl(const std::vector<int>& a, bool& terminal,
                                std::map<std::string, double>& info) override;
  void save_kind_state(ByteWriter& out) const override;
  void load_kind_state(ByteReader& in) override;

 private:
  int grid_;
  int radius_;
  int num_landmarks_;
  std::vector<Cell> agents_;
  std::vector<Cell> landmarks_;
};

/// Two paddles keep a ball in play in a discretized corridor. Agent 0 guards
/// column 0, agent 1 guards the last column. Actions: 0 stay, 1 up, 2 down.
/// Each surviving step pays 0.1 to both agents; a miss ends the episode with
/// reward 0. The ball moves one cell diagonally per step and reflects off the
/// top and bottom walls.
///
/// Observation of agent i: own paddle row / (H - paddle), ball visibility flag
/// (ball in the agent's half), ball x / (L-1), ball y / (H-1), vx, vy; ball
/// entries are zero when not visible.
class CorridorKeepup final : public Environment {
 public:
  static constexpr int kActions = 3;
  static constexpr int kDefaultHorizon = 50;
  static constexpr double kSurvivalReward = 0.1;

  CorridorKeepup(int length, int height, int paddle_height, int horizon,
                 double reward_scale = 1.0);

  std::string kind() const override { return "corridor_keepup"; }
  std::vector<Observation> observe() const override;
  Range reward_bounds() const override;
  std::unique_ptr<Environment> clone() const override;

  struct Ball {
    int x = 0;
    int y = 0;
    int vx = 1;
    int vy = 1;
    friend bool operator==(const Ball&, const Ball&) = default;
  };
  const Ball& ball() const { return ball_; }
  const std::array<int, 2>& paddles() const { return paddles_; }

 protected:
  void reset_impl(std::uint64_t seed) override;
  std::vector<double> step_impl(const std::vector<int>& a, bool& terminal,
                                std::map<std::string, double>& info) override;
  void save_kind_state(ByteWriter& out) const override;
  void load_kind_state(ByteReader& in) override;

 private:
  bool covers(int agent, int y) const;

  int length_;
  int height_;
  int paddle_;
  Ball ball_;
  std::array<int, 2> paddles_{0, 0};
};

}  // namespace marq::envs
