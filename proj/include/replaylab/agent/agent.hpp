#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "replaylab/core/experience.hpp"
#include "replaylab/memory/fifo_buffer.hpp"
#include "replaylab/memory/sampler.hpp"
#include "replaylab/memory/selection.hpp"
#include "replaylab/memory/surprise.hpp"
#include "replaylab/nn/loss.hpp"
#include "replaylab/nn/optimizer.hpp"

namespace replaylab {

struct AgentConfig {
  double epsilon = 0.05;
  double epsilon_start = 1.0;           // only used while decaying
  std::size_t epsilon_decay_steps = 0;  // 0: epsilon is fixed
  double gamma = 0.95;
  std::size_t return_horizon = 0;  // 0: full-episode returns
  BatchSpec batch;
  std::size_t fifo_capacity = 100;  // FifoBuffer::kUnbounded for an unlimited buffer
  std::size_t episodic_capacity = 900;  // 0: FIFO-only baseline
  SelectionStrategy strategy;
  std::size_t train_every = 1;
  std::size_t eval_every = 250;
  std::size_t eval_episodes = 100;
  nn::OptimizerConfig optimizer;

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error("agent.epsilon must be in [0,1]");
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0)) throw Error("agent.epsilon_start must be in [0,1]");
    check_discount(gamma);
    batch.validate();
    if (fifo_capacity == 0) throw Error("memory.fifo_capacity must be positive");
    if (train_every == 0) throw Error("agent.train_every must be positive");
    if (eval_every == 0) throw Error("agent.eval_every must be positive");
    if (eval_episodes == 0) throw Error("agent.eval_episodes must be positive");
    optimizer.validate();
  }

  /// Exploration rate after `step` environment steps: linear from
  /// epsilon_start to epsilon over epsilon_decay_steps, then constant.
  double epsilon_at(std::uint64_t step) const {
    if (epsilon_decay_steps == 0 || step >= epsilon_decay_steps) return epsilon;
    const double frac = static_cast<double>(step) / static_cast<double>(epsilon_decay_steps);
    return epsilon_start + (epsilon - epsilon_start) * frac;
  }
};

/// Epsilon-greedy over Q-values; ties go to the lowest action index.
template <class Rng>
std::size_t select_action(std::span<const double> q_values, double epsilon, Rng& rng) {
  if (q_values.empty()) throw Error("no actions to choose from");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> any(0, q_values.size() - 1);
    return any(rng);
  }
  return static_cast<std::size_t>(std::max_element(q_values.begin(), q_values.end()) - q_values.begin());
}

template <class Rng>
std::size_t select_action(const nn::QNetwork& net, std::span<const double> state, double epsilon, Rng& rng) {
  const Vector q = net.forward(state);
  return select_action(std::span<const double>(q), epsilon, rng);
}

struct EpisodeOptions {
  double epsilon = 0.05;
  double gamma = 0.95;
  std::size_t return_horizon = 0;
  TaskId task = 0;
  std::uint64_t first_step = 0;  // global step index of the first transition
};

/// Fills the returns of a finished (or cut) trajectory. With a finite
/// horizon the tail is bootstrapped from max_a Q at the state reached.
inline void finalize_returns(Trajectory& traj, const nn::QNetwork& net, double gamma, std::size_t horizon) {
  if (traj.empty()) return;
  if (horizon == 0) {
    fill_returns(traj, gamma);
    return;
  }
  Vector rewards, bootstrap;
  for (const auto& e : traj.experiences) {
    rewards.push_back(e.reward);
    if (e.terminal) {
      bootstrap.push_back(0.0);
    } else {
      const Vector q = net.forward(e.next_state);
      bootstrap.push_back(*std::max_element(q.begin(), q.end()));
    }
  }
  const Vector returns = nstep_returns(rewards, bootstrap, gamma, horizon);
  traj.episode_reward = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    traj.experiences[i].ret = returns[i];
    traj.episode_reward += rewards[i];
  }
}

/// Runs one epsilon-greedy episode from `obs` (the environment must have
/// just been reset). `after_step` sees every transition as it happens and
/// may return false to cut the episode short. Returns are filled in before
/// the trajectory is handed back.
template <class Env, class Rng, class Hook>
Trajectory run_episode(Env& env, Vector obs, const nn::QNetwork& net, const EpisodeOptions& opts, Rng& rng,
                       Hook&& after_step) {
  Trajectory traj;
  std::uint64_t step = opts.first_step;
  while (true) {
    const std::size_t action = select_action(net, obs, opts.epsilon, rng);
    StepResult r = env.step(action);
    Experience e;
    e.state = std::move(obs);
    e.action = action;
    e.reward = r.reward;
    e.next_state = r.observation;
    e.terminal = r.terminal;
    e.task_id = opts.task;
    e.step_index = step++;
    traj.experiences.push_back(std::move(e));
    obs = std::move(r.observation);
    const bool keep_going = after_step(traj.experiences.back());
    if (r.done() || !keep_going) break;
  }
  finalize_returns(traj, net, opts.gamma, opts.return_horizon);
  return traj;
}

template <class Env, class Rng>
Trajectory run_episode(Env& env, Vector obs, const nn::QNetwork& net, const EpisodeOptions& opts, Rng& rng) {
  return run_episode(env, std::move(obs), net, opts, rng, [](const Experience&) { return true; });
}

/// Inserts every experience into the FIFO buffer and offers it to the
/// episodic store. Surprise ranks come from `net` as it is right now.
inline void absorb_trajectory(const Trajectory& traj, FifoBuffer& fifo, EpisodicMemory* episodic,
                              const nn::QNetwork& net, double gamma, nn::LossKind loss = nn::LossKind::SquaredTd) {
  std::vector<double> surprise;
  if (episodic && episodic->strategy().kind == StrategyKind::Surprise)
    surprise = surprise_ranks(net, traj.experiences, episodic->strategy().surprise_target, gamma, loss);
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Experience& e = traj.experiences[i];
    if (episodic) {
      std::optional<double> rank;
      if (!surprise.empty()) rank = surprise[i];
      episodic->offer(e, rank);
    }
    fifo.insert(e);
  }
}

struct TrainStepResult {
  bool performed = false;
  double loss = 0.0;
  double max_abs_error = 0.0;
  std::size_t from_fifo = 0;
  std::size_t from_episodic = 0;
};

/// One minibatch, one loss evaluation, one optimizer update. A no-op when
/// both buffers are empty.
template <class Rng>
TrainStepResult train_step(nn::QNetwork& net, const FifoBuffer& fifo, EpisodicMemory* episodic, const BatchSpec& spec,
                           const nn::OptimizerConfig& opt, nn::LossKind loss, Rng& rng, nn::Workspace& ws) {
  TrainStepResult out;
  if (fifo.empty() && (episodic == nullptr || episodic->empty())) return out;
  const SampledBatch batch = sample_batch(fifo, episodic, spec, rng);
  const nn::LossResult res = nn::compute_loss(net, batch.experiences, loss, ws);
  nn::optimizer_step(net, res.gradient, opt);
  out.performed = true;
  out.loss = res.loss;
  out.max_abs_error = res.max_abs_error;
  out.from_fifo = batch.from_fifo;
  out.from_episodic = batch.from_episodic;
  return out;
}

struct EvalResult {
  std::vector<double> success;      // per evaluated task, in [0,1]
  std::vector<double> mean_return;  // per evaluated task
};

/// Greedy (epsilon = 0) rollouts on a private copy of `env`; touches neither
/// buffers nor parameters. Requires a deterministic environment whose
/// `state_key()` identifies the observation, so greedy actions are computed
/// once per distinct state.
template <class Env, class Rng>
EvalResult evaluate(const nn::QNetwork& net, const Env& env_proto, std::span<const TaskId> tasks,
                    std::size_t episodes_per_task, Rng& rng) {
  if (episodes_per_task == 0) throw Error("episodes_per_task must be at least 1");
  Env env = env_proto;
  std::unordered_map<std::size_t, std::size_t> greedy;
  EvalResult out;
  for (const TaskId task : tasks) {
    std::size_t successes = 0;
    double total_return = 0.0;
    for (std::size_t ep = 0; ep < episodes_per_task; ++ep) {
      Vector obs = env.reset(task, rng);
      while (true) {
        const std::size_t key = env.state_key();
        auto it = greedy.find(key);
        if (it == greedy.end()) {
          const Vector q = net.forward(obs);
          it = greedy.emplace(key, static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin())).first;
        }
        StepResult r = env.step(it->second);
        total_return += r.reward;
        if (r.terminal) ++successes;
        if (r.done()) break;
        obs = std::move(r.observation);
      }
    }
    out.success.push_back(static_cast<double>(successes) / static_cast<double>(episodes_per_task));
    out.mean_return.push_back(total_return / static_cast<double>(episodes_per_task));
  }
  return out;
}

}  // namespace replaylab
