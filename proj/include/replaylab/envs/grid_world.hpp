#pragma once

#include <array>
#include <cstddef>
#include <cstdlib>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "replaylab/core/experience.hpp"

namespace replaylab {

struct GridPos {
  int row = 0;
  int col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

enum class GridAction : std::size_t { Up = 0, Down = 1, Left = 2, Right = 3 };

struct GridRewards {
  double goal = 1.0;
  double step_cost = -0.01;
};

/// Four-room navigation on an 11x11 grid.
///
/// Walls fill row 5 and column 5; the gaps at (5,2), (5,8), (2,5) and (8,5)
/// are the doorways. Room 0 is top-left, 1 top-right, 2 bottom-left and 3
/// bottom-right. The agent always starts at (0,0) in room 0, and task k
/// places the goal uniformly in room k+1, so there are three tasks.
///
/// Observations are three 11x11 binary planes (walls, agent, goal) laid out
/// plane after plane, each row-major.
class GridWorld {
 public:
  static constexpr int kSize = 11;
  static constexpr int kCells = kSize * kSize;
  static constexpr std::size_t kNumActions = 4;
  static constexpr std::size_t kNumTasks = 3;
  static constexpr std::size_t kObservationSize = 3 * kCells;
  static constexpr GridPos kStart{0, 0};

  using Rewards = GridRewards;

  explicit GridWorld(Rewards rewards = {}, int max_steps = 100) : rewards_(rewards), max_steps_(max_steps) {
    if (max_steps_ <= 0) throw Error("grid.max_steps must be positive");
  }

  static bool is_wall(GridPos p) {
    if (p.row == 5) return !(p.col == 2 || p.col == 8);
    if (p.col == 5) return !(p.row == 2 || p.row == 8);
    return false;
  }
  static bool is_doorway(GridPos p) { return (p.row == 5 || p.col == 5) && !is_wall(p); }
  static bool in_bounds(GridPos p) { return p.row >= 0 && p.row < kSize && p.col >= 0 && p.col < kSize; }

  /// Room index 0..3 of an open, non-doorway cell; -1 otherwise.
  static int room_of(GridPos p) {
    if (!in_bounds(p) || p.row == 5 || p.col == 5) return -1;
    return (p.row > 5 ? 2 : 0) + (p.col > 5 ? 1 : 0);
  }
  static int goal_room(std::size_t task) { return static_cast<int>(task) + 1; }

  static std::vector<GridPos> room_cells(int room) {
    std::vector<GridPos> cells;
    for (int r = 0; r < kSize; ++r)
      for (int c = 0; c < kSize; ++c)
        if (room_of({r, c}) == room) cells.push_back({r, c});
    return cells;
  }

  template <class Rng>
  Vector reset(std::size_t task, Rng& rng) {
    if (task >= kNumTasks) throw Error("invalid task_id " + std::to_string(task));
    const auto cells = room_cells(goal_room(task));
    std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
    return reset_with_goal(task, cells[pick(rng)]);
  }

  Vector reset_with_goal(std::size_t task, GridPos goal) {
    if (task >= kNumTasks) throw Error("invalid task_id " + std::to_string(task));
    if (room_of(goal) != goal_room(task)) throw Error("goal outside the task's room");
    task_ = task;
    goal_ = goal;
    agent_ = kStart;
    steps_ = 0;
    done_ = false;
    return observation();
  }

  StepResult step(std::size_t action) {
    if (done_) throw Error("step after episode end");
    if (action >= kNumActions) throw Error("invalid action " + std::to_string(action));
    static constexpr std::array<GridPos, kNumActions> kDelta{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
    const GridPos next{agent_.row + kDelta[action].row, agent_.col + kDelta[action].col};
    if (in_bounds(next) && !is_wall(next)) agent_ = next;
    ++steps_;
    StepResult r;
    if (agent_ == goal_) {
      r.reward = rewards_.goal;
      r.terminal = true;
    } else {
      r.reward = rewards_.step_cost;
      r.timed_out = steps_ >= max_steps_;
    }
    done_ = r.done();
    r.observation = observation();
    return r;
  }

  Vector observation() const {
    Vector obs(kObservationSize, 0.0);
    for (int r = 0; r < kSize; ++r)
      for (int c = 0; c < kSize; ++c)
        if (is_wall({r, c})) obs[static_cast<std::size_t>(r * kSize + c)] = 1.0;
    obs[static_cast<std::size_t>(kCells + agent_.row * kSize + agent_.col)] = 1.0;
    obs[static_cast<std::size_t>(2 * kCells + goal_.row * kSize + goal_.col)] = 1.0;
    return obs;
  }

  /// Compact identifier of the full environment state (agent and goal).
  std::size_t state_key() const {
    return static_cast<std::size_t>((agent_.row * kSize + agent_.col) * kCells + goal_.row * kSize + goal_.col);
  }

  GridPos agent() const { return agent_; }
  GridPos goal() const { return goal_; }
  std::size_t task() const { return task_; }
  int steps() const { return steps_; }
  int max_steps() const { return max_steps_; }
  bool done() const { return done_; }
  const Rewards& rewards() const { return rewards_; }
  std::size_t num_actions() const { return kNumActions; }
  std::size_t num_tasks() const { return kNumTasks; }
  std::size_t observation_size() const { return kObservationSize; }

 private:
  Rewards rewards_;
  int max_steps_;
  std::size_t task_ = 0;
  GridPos agent_ = kStart;
  GridPos goal_{0, 6};
  int steps_ = 0;
  bool done_ = true;
};

/// Agent and goal coordinates decoded from an observation.
struct GridCoordinates {
  GridPos agent;
  GridPos goal;
};

inline GridCoordinates decode_grid_observation(std::span<const double> obs) {
  if (obs.size() != GridWorld::kObservationSize) throw Error("not a grid-world observation");
  GridCoordinates out;
  int agents = 0, goals = 0;
  for (int i = 0; i < GridWorld::kCells; ++i) {
    const GridPos p{i / GridWorld::kSize, i % GridWorld::kSize};
    if (obs[static_cast<std::size_t>(GridWorld::kCells + i)] > 0.5) out.agent = p, ++agents;
    if (obs[static_cast<std::size_t>(2 * GridWorld::kCells + i)] > 0.5) out.goal = p, ++goals;
  }
  if (agents != 1 || goals != 1) throw Error("grid observation must mark exactly one agent and one goal");
  return out;
}

/// Manhattan distance between the agents plus between the goals.
inline double grid_state_distance(std::span<const double> a, std::span<const double> b) {
  const auto x = decode_grid_observation(a);
  const auto y = decode_grid_observation(b);
  return std::abs(x.agent.row - y.agent.row) + std::abs(x.agent.col - y.agent.col) +
         std::abs(x.goal.row - y.goal.row) + std::abs(x.goal.col - y.goal.col);
}

/// Coverage feature for the grid world: (agent row, agent col, goal row,
/// goal col) of the state, so that L1 on features equals grid_state_distance.
inline Vector grid_coverage_feature(const TransitionView& e) {
  const auto c = decode_grid_observation(e.state);
  return {static_cast<double>(c.agent.row), static_cast<double>(c.agent.col), static_cast<double>(c.goal.row),
          static_cast<double>(c.goal.col)};
}

}  // namespace replaylab
