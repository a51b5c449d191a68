#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "replaylab/core/error.hpp"

namespace replaylab {

using Vector = std::vector<double>;
using TaskId = std::size_t;

// One environment transition plus the bookkeeping the replay system needs.
// `ret` is the discounted return from this step to the end of the episode and
// is filled in before the experience reaches any buffer.
struct Experience {
  Vector state;
  std::size_t action = 0;
  double reward = 0.0;
  Vector next_state;
  bool terminal = false;
  double ret = 0.0;
  TaskId task_id = 0;
  std::uint64_t step_index = 0;

  friend bool operator==(const Experience&, const Experience&) = default;
};

// What a selection strategy is allowed to see of an experience. There is no
// task label here: strategies have to be task-agnostic.
struct TransitionView {
  std::span<const double> state;
  std::size_t action = 0;
  double reward = 0.0;
  std::span<const double> next_state;
  bool terminal = false;
  double ret = 0.0;
};

inline TransitionView view_of(const Experience& e) {
  return TransitionView{e.state, e.action, e.reward, e.next_state, e.terminal, e.ret};
}

// Outcome of one environment step.
struct StepResult {
  Vector observation;
  double reward = 0.0;
  bool terminal = false;   // goal reached
  bool timed_out = false;  // step budget exhausted without reaching the goal
  bool done() const { return terminal || timed_out; }
};

struct Trajectory {
  std::vector<Experience> experiences;
  double episode_reward = 0.0;

  std::size_t size() const { return experiences.size(); }
  bool empty() const { return experiences.empty(); }
  bool reached_terminal() const { return !experiences.empty() && experiences.back().terminal; }
};

inline void check_discount(double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error("invalid discount");
}

/// Backward recursion R_i = r_i + gamma * R_{i+1}, with R_last = r_last.
inline Vector discounted_returns(std::span<const double> rewards, double gamma) {
  if (rewards.empty()) throw Error("empty trajectory");
  check_discount(gamma);
  Vector out(rewards.size());
  out.back() = rewards.back();
  for (std::size_t i = rewards.size() - 1; i-- > 0;) out[i] = rewards[i] + gamma * out[i + 1];
  return out;
}

/// Truncated n-step returns. `bootstrap[i]` is the value estimate of the
/// state reached after step i (only read where the horizon ends before the
/// trajectory does). `horizon == 0` means full-episode returns.
inline Vector nstep_returns(std::span<const double> rewards, std::span<const double> bootstrap,
                            double gamma, std::size_t horizon) {
  if (horizon == 0) return discounted_returns(rewards, gamma);
  if (rewards.empty()) throw Error("empty trajectory");
  check_discount(gamma);
  if (bootstrap.size() != rewards.size()) throw Error("bootstrap length does not match rewards");
  const std::size_t n = rewards.size();
  Vector out(n);
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0;
    double discount = 1.0;
    std::size_t k = t;
    for (; k < n && k < t + horizon; ++k) {
      acc += discount * rewards[k];
      discount *= gamma;
    }
    if (k < n) acc += discount * bootstrap[k - 1];
    out[t] = acc;
  }
  return out;
}

/// Fills `ret` on every experience and recomputes `episode_reward`.
inline void fill_returns(Trajectory& traj, double gamma) {
  Vector rewards;
  rewards.reserve(traj.size());
  for (const auto& e : traj.experiences) rewards.push_back(e.reward);
  const Vector returns = discounted_returns(rewards, gamma);
  traj.episode_reward = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    traj.experiences[i].ret = returns[i];
    traj.episode_reward += rewards[i];
  }
}

/// [state | one-hot(action) | next_state | reward]
inline Vector experience_feature(const TransitionView& e, std::size_t num_actions) {
  if (e.action >= num_actions) throw Error("action index out of range for feature encoding");
  Vector f;
  f.reserve(e.state.size() + num_actions + e.next_state.size() + 1);
  f.insert(f.end(), e.state.begin(), e.state.end());
  for (std::size_t a = 0; a < num_actions; ++a) f.push_back(a == e.action ? 1.0 : 0.0);
  f.insert(f.end(), e.next_state.begin(), e.next_state.end());
  f.push_back(e.reward);
  return f;
}

inline Vector experience_feature(const Experience& e, std::size_t num_actions) {
  return experience_feature(view_of(e), num_actions);
}

}  // namespace replaylab
