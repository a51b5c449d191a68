#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "replaylab/agent/agent.hpp"
#include "replaylab/envs/digits.hpp"

namespace replaylab {

struct EvalRecord {
  std::uint64_t global_step = 0;
  TaskId training_task = 0;
  std::vector<double> per_task_success;
  std::vector<double> per_task_mean_return;
  double max_td_error_seen = 0.0;  // largest per-example error since the previous record
  double loss_ma = 0.0;            // mean training loss since the previous record
};

struct TdTracePoint {
  std::uint64_t global_step = 0;
  double max_abs_error = 0.0;
};

/// Everything a lifelong run leaves behind.
struct LifelongResult {
  std::vector<EvalRecord> records;
  std::vector<TdTracePoint> td_trace;
  std::size_t training_episodes = 0;
  std::size_t training_goals = 0;  // training episodes that ended at the goal
  nn::QNetwork net;
  FifoBuffer fifo{1};
  std::optional<EpisodicMemory> episodic;
};

namespace detail {

// Independent, reproducible RNG streams for one run.
struct RunStreams {
  explicit RunStreams(std::uint64_t seed) {
    std::seed_seq seq{seed, std::uint64_t{0x5e1ec7}};
    std::array<std::uint32_t, 4> s{};
    seq.generate(s.begin(), s.end());
    action.seed(s[0]);
    env.seed(s[1]);
    sample.seed(s[2]);
    eval_base = s[3];
  }
  std::mt19937_64 action;
  std::mt19937_64 env;
  std::mt19937_64 sample;
  std::uint64_t eval_base = 0;

  std::mt19937_64 eval_stream(std::uint64_t index) const { return std::mt19937_64(eval_base * 1000003u + index); }
};

class RecordWindow {
 public:
  void add(const TrainStepResult& r) {
    if (!r.performed) return;
    max_error_ = std::max(max_error_, r.max_abs_error);
    loss_sum_ += r.loss;
    ++steps_;
  }
  void close(EvalRecord& rec) {
    rec.max_td_error_seen = max_error_;
    rec.loss_ma = steps_ > 0 ? loss_sum_ / static_cast<double>(steps_) : 0.0;
    *this = RecordWindow{};
  }

 private:
  double max_error_ = 0.0;
  double loss_sum_ = 0.0;
  std::size_t steps_ = 0;
};

inline std::optional<EpisodicMemory> make_episodic(const AgentConfig& cfg, FeatureFn feature) {
  if (cfg.episodic_capacity == 0) return std::nullopt;
  return EpisodicMemory(cfg.episodic_capacity, cfg.strategy, std::move(feature));
}

}  // namespace detail

/// Trains one network on a sequence of tasks in order. Buffers never learn
/// where task boundaries are; an episode still running when its task's
/// budget ends is cut and absorbed. Every `eval_every` environment steps all
/// `eval_tasks` are evaluated greedily and a record is emitted.
template <class Env>
LifelongResult train_lifelong(const Env& env_proto, std::span<const TaskId> task_order,
                              std::span<const std::size_t> steps_per_task, const AgentConfig& cfg, nn::QNetwork net,
                              FeatureFn coverage_feature, std::uint64_t seed, std::span<const TaskId> eval_tasks) {
  if (task_order.size() != steps_per_task.size()) throw Error("need exactly one step budget per task");
  cfg.validate();
  detail::RunStreams rng(seed);
  LifelongResult out;
  out.fifo = FifoBuffer(cfg.fifo_capacity);
  out.episodic = detail::make_episodic(cfg, std::move(coverage_feature));
  EpisodicMemory* episodic = out.episodic ? &*out.episodic : nullptr;
  nn::Workspace ws;
  detail::RecordWindow window;
  Env env = env_proto;
  std::uint64_t global = 0;
  std::uint64_t evals = 0;

  const auto emit = [&](TaskId training_task) {
    auto eval_rng = rng.eval_stream(evals++);
    const EvalResult ev = evaluate(net, env_proto, eval_tasks, cfg.eval_episodes, eval_rng);
    EvalRecord rec{global, training_task, ev.success, ev.mean_return, 0.0, 0.0};
    window.close(rec);
    out.records.push_back(std::move(rec));
  };

  for (std::size_t t = 0; t < task_order.size(); ++t) {
    const TaskId task = task_order[t];
    const std::uint64_t task_end = global + steps_per_task[t];
    while (global < task_end) {
      EpisodeOptions opts{cfg.epsilon_at(global), cfg.gamma, cfg.return_horizon, task, global};
      Vector obs = env.reset(task, rng.env);
      Trajectory traj = run_episode(env, std::move(obs), net, opts, rng.action, [&](const Experience&) {
        ++global;
        if (global % cfg.train_every == 0) {
          const auto r = train_step(net, out.fifo, episodic, cfg.batch, cfg.optimizer, nn::LossKind::SquaredTd,
                                    rng.sample, ws);
          if (r.performed) out.td_trace.push_back({global, r.max_abs_error});
          window.add(r);
        }
        if (global % cfg.eval_every == 0) emit(task);
        return global < task_end;
      });
      ++out.training_episodes;
      if (traj.reached_terminal()) ++out.training_goals;
      absorb_trajectory(traj, out.fifo, episodic, net, cfg.gamma);
    }
  }
  if (out.records.empty() || out.records.back().global_step != global)
    emit(task_order.empty() ? TaskId{0} : task_order.back());
  out.net = std::move(net);
  return out;
}

struct ClassificationEval {
  std::vector<double> per_task_accuracy;
  std::vector<double> per_task_mean_nll;
  double overall_accuracy = 0.0;
};

/// 10-way accuracy of `net` on a labelled set, overall and per digit pair.
inline ClassificationEval evaluate_classification(const nn::QNetwork& net, const ImageDataset& test,
                                                  std::size_t num_tasks = kNumDigitTasks) {
  ClassificationEval out;
  out.per_task_accuracy.assign(num_tasks, 0.0);
  out.per_task_mean_nll.assign(num_tasks, 0.0);
  std::vector<std::size_t> per_task_count(num_tasks, 0);
  std::size_t correct_total = 0;
  nn::Workspace ws;
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < test.size(); start += kChunk) {
    const std::size_t end = std::min(test.size(), start + kChunk);
    nn::Matrix in(static_cast<Eigen::Index>(end - start), static_cast<Eigen::Index>(net.input_size()));
    for (std::size_t i = start; i < end; ++i)
      std::copy(test.examples[i].pixels.begin(), test.examples[i].pixels.end(),
                in.row(static_cast<Eigen::Index>(i - start)).data());
    const nn::Matrix& q = net.forward_batch(in, ws);
    for (std::size_t i = start; i < end; ++i) {
      const auto row = q.row(static_cast<Eigen::Index>(i - start));
      Eigen::Index best = 0;
      row.maxCoeff(&best);
      const std::size_t label = test.examples[i].label;
      const double peak = row.maxCoeff();
      const double log_z = peak + std::log((row.array() - peak).exp().sum());
      const bool hit = static_cast<std::size_t>(best) == label;
      correct_total += hit ? 1 : 0;
      const std::size_t task = label % kNumDigitTasks;
      if (task < num_tasks) {
        out.per_task_accuracy[task] += hit ? 1.0 : 0.0;
        out.per_task_mean_nll[task] += log_z - row(static_cast<Eigen::Index>(label));
        ++per_task_count[task];
      }
    }
  }
  for (std::size_t t = 0; t < num_tasks; ++t) {
    if (per_task_count[t] == 0) continue;
    out.per_task_accuracy[t] /= static_cast<double>(per_task_count[t]);
    out.per_task_mean_nll[t] /= static_cast<double>(per_task_count[t]);
  }
  out.overall_accuracy = test.size() ? static_cast<double>(correct_total) / static_cast<double>(test.size()) : 0.0;
  return out;
}

/// Lifelong digit-pair stream: each iteration draws one example of the
/// current task, pushes it through both buffers, and takes one
/// cross-entropy training step. Records report per-task accuracy as
/// "success" and the negative mean cross-entropy as "return".
inline LifelongResult train_lifelong_classification(const ImageDataset& train, const ImageDataset& test,
                                                    std::span<const TaskId> task_order,
                                                    std::span<const std::size_t> iterations_per_task,
                                                    const AgentConfig& cfg, nn::QNetwork net,
                                                    FeatureFn coverage_feature, std::uint64_t seed) {
  if (task_order.size() != iterations_per_task.size()) throw Error("need exactly one step budget per task");
  cfg.validate();
  if (net.input_size() != train.image_size() || net.output_size() != kNumDigitClasses)
    throw Error("network shape does not match the digit stream");
  detail::RunStreams rng(seed);
  LifelongResult out;
  out.fifo = FifoBuffer(cfg.fifo_capacity);
  out.episodic = detail::make_episodic(cfg, std::move(coverage_feature));
  EpisodicMemory* episodic = out.episodic ? &*out.episodic : nullptr;
  nn::Workspace ws;
  detail::RecordWindow window;
  std::uint64_t global = 0;

  const auto emit = [&](TaskId training_task) {
    const ClassificationEval ev = evaluate_classification(net, test);
    EvalRecord rec{global, training_task, ev.per_task_accuracy, {}, 0.0, 0.0};
    for (const double nll : ev.per_task_mean_nll) rec.per_task_mean_return.push_back(-nll);
    window.close(rec);
    out.records.push_back(std::move(rec));
  };

  for (std::size_t t = 0; t < task_order.size(); ++t) {
    const TaskId task = task_order[t];
    const auto pool = task_indices(train, task);
    if (pool.empty()) throw Error("training set has no examples for task " + std::to_string(task));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t it = 0; it < iterations_per_task[t]; ++it) {
      const LabeledImage& ex = train.examples[pool[pick(rng.env)]];
      Trajectory traj;
      traj.experiences.push_back(classification_as_experience(ex.pixels, ex.label, kNumDigitClasses, task, global));
      absorb_trajectory(traj, out.fifo, episodic, net, cfg.gamma, nn::LossKind::CrossEntropy);
      ++global;
      if (global % cfg.train_every == 0) {
        const auto r = train_step(net, out.fifo, episodic, cfg.batch, cfg.optimizer, nn::LossKind::CrossEntropy,
                                  rng.sample, ws);
        if (r.performed) out.td_trace.push_back({global, r.max_abs_error});
        window.add(r);
      }
      if (global % cfg.eval_every == 0) emit(task);
    }
  }
  if (out.records.empty() || out.records.back().global_step != global)
    emit(task_order.empty() ? TaskId{0} : task_order.back());
  out.net = std::move(net);
  return out;
}

}  // namespace replaylab
