#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "replaylab/agent/agent.hpp"
#include "replaylab/core/error.hpp"
#include "replaylab/envs/digits.hpp"
#include "replaylab/envs/grid_world.hpp"

namespace replaylab::harness {

enum class Domain { GridWorld, Classification };
enum class Preset { FifoOnly, Unlimited, Surprise, Reward, Matching, Coverage, SelectiveOnly };
enum class DataSource { Synthetic, Idx };

inline std::string_view to_string(Domain d) { return d == Domain::GridWorld ? "gridworld" : "classification"; }

inline std::string_view to_string(Preset p) {
  switch (p) {
    case Preset::FifoOnly: return "fifo-only";
    case Preset::Unlimited: return "unlimited";
    case Preset::Surprise: return "surprise";
    case Preset::Reward: return "reward";
    case Preset::Matching: return "matching";
    case Preset::Coverage: return "coverage";
    case Preset::SelectiveOnly: return "selective-only";
  }
  return "?";
}

inline bool uses_episodic(Preset p) { return p != Preset::FifoOnly && p != Preset::Unlimited; }

/// Everything one experiment needs. Fields mirror the dotted config keys.
struct ExperimentConfig {
  std::string name = "experiment";
  Domain domain = Domain::GridWorld;
  Preset strategy = Preset::Matching;
  std::vector<TaskId> tasks{0, 1, 2};
  std::vector<std::size_t> steps_per_task{10000, 10000, 10000};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output_dir = "runs/experiment";

  double epsilon = 0.05;
  double epsilon_start = 1.0;
  std::size_t epsilon_decay_steps = 0;
  double gamma = 0.95;
  std::size_t return_horizon = 0;
  std::size_t train_every = 1;
  std::size_t eval_every = 250;
  std::size_t eval_episodes = 100;

  std::size_t allotment = 1000;
  std::size_t fifo_capacity = 100;
  std::size_t episodic_capacity = 900;
  std::size_t batch_total = 60;
  std::size_t batch_fifo = 30;
  std::size_t batch_episodic = 30;

  double reward_noise = 1e-6;
  SurpriseTarget surprise_target = SurpriseTarget::Return;
  Metric coverage_metric = Metric::L1;
  std::optional<double> coverage_distance;
  std::size_t coverage_calibration = 200;

  nn::OptimizerKind optimizer = nn::OptimizerKind::RMSProp;
  double learning_rate = 2.5e-4;
  double rmsprop_decay = 0.95;
  double rmsprop_epsilon = 1e-6;
  double leaky_alpha = 0.01;

  double goal_reward = 1.0;
  double step_cost = -0.01;
  int max_steps = 100;

  DataSource data_source = DataSource::Synthetic;
  std::string images_path, labels_path, test_images_path, test_labels_path;
  std::size_t synthetic_per_class = 500;
  std::size_t synthetic_test_per_class = 100;
  double synthetic_noise = 0.1;
  std::uint64_t data_seed = 0;

  std::size_t quick_steps_per_task = 3000;

  // Keys that appeared in the parsed file. Presets only fill the others.
  std::set<std::string> explicit_keys;

  bool is_explicit(const std::string& key) const { return explicit_keys.count(key) > 0; }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw Error(key + ": expected a number, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw Error(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw Error(key + ": empty list item");
    out.push_back(static_cast<T>(parse_count(key, item)));
  }
  if (out.empty()) throw Error(key + ": list must not be empty");
  return out;
}

inline Preset parse_preset(const std::string& key, const std::string& v) {
  for (Preset p : {Preset::FifoOnly, Preset::Unlimited, Preset::Surprise, Preset::Reward, Preset::Matching,
                   Preset::Coverage, Preset::SelectiveOnly})
    if (v == to_string(p)) return p;
  throw Error(key + ": unknown strategy '" + v + "'");
}

template <class T>
std::string list_text(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out;
}

// Shortest text that parses back to the same double.
inline std::string real_text(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct KeySpec {
  Setter set;
  Getter get;
};

#define RL_REAL(field) \
  KeySpec { [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = parse_real(k, v); }, \
            [](const ExperimentConfig& c) { return real_text(c.field); } }
#define RL_COUNT(field)                                                                                        \
  KeySpec {                                                                                                    \
    [](ExperimentConfig& c, const std::string& k, const std::string& v) {                                      \
      c.field = static_cast<decltype(c.field)>(parse_count(k, v));                                             \
    },                                                                                                         \
        [](const ExperimentConfig& c) { return std::to_string(c.field); }                                      \
  }
#define RL_TEXT(field) \
  KeySpec { [](ExperimentConfig& c, const std::string&, const std::string& v) { c.field = v; }, \
            [](const ExperimentConfig& c) { return c.field; } }

inline const std::map<std::string, KeySpec>& key_table() {
  static const std::map<std::string, KeySpec> table = {
      {"experiment.name", RL_TEXT(name)},
      {"experiment.domain",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "gridworld") c.domain = Domain::GridWorld;
          else if (v == "classification") c.domain = Domain::Classification;
          else throw Error(k + ": expected gridworld or classification, got '" + v + "'");
        },
        [](const ExperimentConfig& c) { return std::string(to_string(c.domain)); }}},
      {"experiment.strategy",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.strategy = parse_preset(k, v); },
        [](const ExperimentConfig& c) { return std::string(to_string(c.strategy)); }}},
      {"experiment.tasks",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.tasks = parse_list<TaskId>(k, v); },
        [](const ExperimentConfig& c) { return list_text(c.tasks); }}},
      {"experiment.steps_per_task",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.steps_per_task = parse_list<std::size_t>(k, v);
        },
        [](const ExperimentConfig& c) { return list_text(c.steps_per_task); }}},
      {"experiment.seeds",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.seeds = parse_list<std::uint64_t>(k, v);
        },
        [](const ExperimentConfig& c) { return list_text(c.seeds); }}},
      {"experiment.output_dir", RL_TEXT(output_dir)},
      {"agent.epsilon", RL_REAL(epsilon)},
      {"agent.epsilon_start", RL_REAL(epsilon_start)},
      {"agent.epsilon_decay_steps", RL_COUNT(epsilon_decay_steps)},
      {"agent.gamma", RL_REAL(gamma)},
      {"agent.return_horizon", RL_COUNT(return_horizon)},
      {"agent.train_every", RL_COUNT(train_every)},
      {"agent.eval_every", RL_COUNT(eval_every)},
      {"agent.eval_episodes", RL_COUNT(eval_episodes)},
      {"memory.allotment", RL_COUNT(allotment)},
      {"memory.fifo_capacity", RL_COUNT(fifo_capacity)},
      {"memory.episodic_capacity", RL_COUNT(episodic_capacity)},
      {"memory.batch_total", RL_COUNT(batch_total)},
      {"memory.batch_fifo", RL_COUNT(batch_fifo)},
      {"memory.batch_episodic", RL_COUNT(batch_episodic)},
      {"selection.reward_noise", RL_REAL(reward_noise)},
      {"selection.surprise_target",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "return") c.surprise_target = SurpriseTarget::Return;
          else if (v == "one-step") c.surprise_target = SurpriseTarget::OneStep;
          else throw Error(k + ": expected return or one-step, got '" + v + "'");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.surprise_target == SurpriseTarget::Return ? "return" : "one-step");
        }}},
      {"coverage.metric",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          try {
            c.coverage_metric = parse_metric(v);
          } catch (const Error&) {
            throw Error(k + ": unknown metric '" + v + "'");
          }
        },
        [](const ExperimentConfig& c) { return std::string(to_string(c.coverage_metric)); }}},
      {"coverage.distance",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "auto") c.coverage_distance.reset();
          else c.coverage_distance = parse_real(k, v);
        },
        [](const ExperimentConfig& c) {
          return c.coverage_distance ? real_text(*c.coverage_distance) : std::string("auto");
        }}},
      {"coverage.calibration_size", RL_COUNT(coverage_calibration)},
      {"optimizer.kind",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          try {
            c.optimizer = nn::parse_optimizer(v);
          } catch (const Error&) {
            throw Error(k + ": expected rmsprop or sgd, got '" + v + "'");
          }
        },
        [](const ExperimentConfig& c) { return std::string(nn::to_string(c.optimizer)); }}},
      {"optimizer.learning_rate", RL_REAL(learning_rate)},
      {"optimizer.decay", RL_REAL(rmsprop_decay)},
      {"optimizer.epsilon", RL_REAL(rmsprop_epsilon)},
      {"network.leaky_alpha", RL_REAL(leaky_alpha)},
      {"grid.goal_reward", RL_REAL(goal_reward)},
      {"grid.step_cost", RL_REAL(step_cost)},
      {"grid.max_steps",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.max_steps = static_cast<int>(parse_count(k, v));
        },
        [](const ExperimentConfig& c) { return std::to_string(c.max_steps); }}},
      {"data.source",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
          if (v == "synthetic") c.data_source = DataSource::Synthetic;
          else if (v == "idx") c.data_source = DataSource::Idx;
          else throw Error(k + ": expected synthetic or idx, got '" + v + "'");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.data_source == DataSource::Synthetic ? "synthetic" : "idx");
        }}},
      {"data.images", RL_TEXT(images_path)},
      {"data.labels", RL_TEXT(labels_path)},
      {"data.test_images", RL_TEXT(test_images_path)},
      {"data.test_labels", RL_TEXT(test_labels_path)},
      {"data.synthetic_per_class", RL_COUNT(synthetic_per_class)},
      {"data.synthetic_test_per_class", RL_COUNT(synthetic_test_per_class)},
      {"data.synthetic_noise", RL_REAL(synthetic_noise)},
      {"data.seed", RL_COUNT(data_seed)},
      {"quick.steps_per_task", RL_COUNT(quick_steps_per_task)},
  };
  return table;
}

#undef RL_REAL
#undef RL_COUNT
#undef RL_TEXT

}  // namespace detail

/// Applies the defaults that depend on the domain to every key the file
/// did not set.
inline void apply_domain_defaults(ExperimentConfig& c) {
  if (c.domain != Domain::Classification) return;
  const auto fill = [&](const char* key, auto& field, auto value) {
    if (!c.is_explicit(key)) field = value;
  };
  fill("experiment.tasks", c.tasks, std::vector<TaskId>{0, 1, 2, 3, 4});
  fill("experiment.steps_per_task", c.steps_per_task, std::vector<std::size_t>(c.tasks.size(), 1000));
  fill("optimizer.kind", c.optimizer, nn::OptimizerKind::SGD);
  fill("optimizer.learning_rate", c.learning_rate, 0.1);
  fill("coverage.metric", c.coverage_metric, Metric::L2);
  fill("agent.eval_every", c.eval_every, std::size_t{100});
  fill("quick.steps_per_task", c.quick_steps_per_task, std::size_t{300});
}

/// Parses `key = value` lines; `#` starts a comment. Unknown keys, repeated
/// keys and malformed values are errors that name the key and line.
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  const auto& table = detail::key_table();
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::pair<std::string, std::string>> assignments;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = detail::trim(body.substr(0, eq));
    const std::string value = detail::trim(body.substr(eq + 1));
    if (!table.count(key)) throw Error(key + ": unknown key (line " + std::to_string(lineno) + ")");
    if (cfg.explicit_keys.count(key)) throw Error(key + ": set twice (line " + std::to_string(lineno) + ")");
    if (value.empty()) throw Error(key + ": missing value (line " + std::to_string(lineno) + ")");
    cfg.explicit_keys.insert(key);
    assignments.emplace_back(key, value);
  }
  // Domain first, so its defaults never overwrite explicit values.
  for (const auto& [k, v] : assignments)
    if (k == "experiment.domain") table.at(k).set(cfg, k, v);
  for (const auto& [k, v] : assignments)
    if (k == "experiment.tasks") table.at(k).set(cfg, k, v);
  apply_domain_defaults(cfg);
  for (const auto& [k, v] : assignments) table.at(k).set(cfg, k, v);
  if (!cfg.is_explicit("experiment.steps_per_task") && cfg.steps_per_task.size() != cfg.tasks.size())
    cfg.steps_per_task.assign(cfg.tasks.size(), cfg.steps_per_task.empty() ? 0 : cfg.steps_per_task.front());
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Every key with a value, one `key = value` per line; parses back to `cfg`.
inline std::string config_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [key, spec] : detail::key_table())
    if (const std::string v = spec.get(cfg); !v.empty()) out += key + " = " + v + "\n";
  return out;
}

inline std::map<std::string, std::string> config_values(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& [key, spec] : detail::key_table()) out[key] = spec.get(cfg);
  return out;
}

/// Shrinks every task to the quick profile's step budget.
inline void apply_quick(ExperimentConfig& cfg) {
  for (auto& s : cfg.steps_per_task) s = std::min(s, cfg.quick_steps_per_task);
}

/// Buffer sizes and batch split after the strategy preset is applied.
struct MemoryLayout {
  std::size_t fifo_capacity = 0;
  std::size_t episodic_capacity = 0;
  BatchSpec batch;
};

inline MemoryLayout memory_layout(const ExperimentConfig& c) {
  MemoryLayout m;
  const auto pick = [&](const char* key, std::size_t given, std::size_t preset) {
    return c.is_explicit(key) ? given : preset;
  };
  const auto forbid = [&](const char* key, std::size_t given, std::size_t required) {
    if (c.is_explicit(key) && given != required)
      throw Error(std::string(key) + " must be " + std::to_string(required) + " for strategy " +
                  std::string(to_string(c.strategy)));
  };
  const std::size_t total = c.batch_total;
  switch (c.strategy) {
    case Preset::FifoOnly:
      m.fifo_capacity = pick("memory.fifo_capacity", c.fifo_capacity, c.allotment);
      forbid("memory.episodic_capacity", c.episodic_capacity, 0);
      forbid("memory.batch_episodic", c.batch_episodic, 0);
      m.batch = {total, pick("memory.batch_fifo", c.batch_fifo, total), 0};
      break;
    case Preset::Unlimited:
      if (c.is_explicit("memory.fifo_capacity"))
        throw Error("memory.fifo_capacity must not be set for strategy unlimited (the buffer is unbounded)");
      forbid("memory.episodic_capacity", c.episodic_capacity, 0);
      forbid("memory.batch_episodic", c.batch_episodic, 0);
      m.fifo_capacity = FifoBuffer::kUnbounded;
      m.batch = {total, pick("memory.batch_fifo", c.batch_fifo, total), 0};
      break;
    case Preset::SelectiveOnly:
      forbid("memory.batch_fifo", c.batch_fifo, 0);
      m.fifo_capacity = c.fifo_capacity;
      m.episodic_capacity = pick("memory.episodic_capacity", c.episodic_capacity, c.allotment);
      m.batch = {total, 0, pick("memory.batch_episodic", c.batch_episodic, total)};
      break;
    default:
      m.fifo_capacity = c.fifo_capacity;
      m.episodic_capacity = c.episodic_capacity;
      m.batch = {total, pick("memory.batch_fifo", c.batch_fifo, total / 2),
                 pick("memory.batch_episodic", c.batch_episodic, total - total / 2)};
      if (m.episodic_capacity == 0) throw Error("memory.episodic_capacity must be positive for selective strategies");
      break;
  }
  return m;
}

inline StrategyKind strategy_kind(Preset p) {
  switch (p) {
    case Preset::Surprise: return StrategyKind::Surprise;
    case Preset::Reward: return StrategyKind::Reward;
    case Preset::Coverage: return StrategyKind::Coverage;
    default: return StrategyKind::Reservoir;
  }
}

/// The agent settings for one seed. The selection RNG is derived from the
/// seed so different seeds draw different reservoir keys.
inline AgentConfig agent_config(const ExperimentConfig& c, std::uint64_t seed) {
  const MemoryLayout m = memory_layout(c);
  AgentConfig a;
  a.epsilon = c.epsilon;
  a.epsilon_start = c.epsilon_start;
  a.epsilon_decay_steps = c.epsilon_decay_steps;
  a.gamma = c.gamma;
  a.return_horizon = c.return_horizon;
  a.batch = m.batch;
  a.fifo_capacity = m.fifo_capacity;
  a.episodic_capacity = m.episodic_capacity;
  a.strategy.kind = strategy_kind(c.strategy);
  a.strategy.coverage.metric = c.coverage_metric;
  a.strategy.coverage.distance = c.coverage_distance;
  a.strategy.coverage.calibration_size = c.coverage_calibration;
  a.strategy.rng_seed = seed * 0x9e3779b97f4a7c15ULL + 0x51ed;
  a.strategy.reward_noise = c.reward_noise;
  a.strategy.surprise_target = c.surprise_target;
  a.train_every = c.train_every;
  a.eval_every = c.eval_every;
  a.eval_episodes = c.eval_episodes;
  a.optimizer.kind = c.optimizer;
  a.optimizer.learning_rate = c.learning_rate;
  a.optimizer.decay = c.rmsprop_decay;
  a.optimizer.epsilon = c.rmsprop_epsilon;
  return a;
}

/// Throws on the first invalid setting; the message starts with the key.
inline void validate(const ExperimentConfig& c) {
  if (c.name.empty()) throw Error("experiment.name must not be empty");
  if (c.output_dir.empty()) throw Error("experiment.output_dir must not be empty");
  if (c.tasks.empty()) throw Error("experiment.tasks must not be empty");
  if (c.steps_per_task.size() != c.tasks.size())
    throw Error("experiment.steps_per_task needs one entry per task (" + std::to_string(c.tasks.size()) + ")");
  for (const auto s : c.steps_per_task)
    if (s == 0) throw Error("experiment.steps_per_task entries must be positive");
  if (c.seeds.empty()) throw Error("experiment.seeds must not be empty");
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
    throw Error("experiment.seeds must be distinct");
  const std::size_t task_limit = c.domain == Domain::GridWorld ? GridWorld::kNumTasks : kNumDigitTasks;
  for (const auto t : c.tasks)
    if (t >= task_limit) throw Error("experiment.tasks: task " + std::to_string(t) + " does not exist");
  if (c.allotment == 0) throw Error("memory.allotment must be positive");
  if (c.fifo_capacity == 0) throw Error("memory.fifo_capacity must be positive");
  if (!(c.reward_noise >= 0.0)) throw Error("selection.reward_noise must be non-negative");
  if (c.coverage_distance && !(*c.coverage_distance > 0.0)) throw Error("coverage.distance must be positive");
  if (c.coverage_calibration < 2) throw Error("coverage.calibration_size must be at least 2");
  if (!(c.leaky_alpha >= 0.0 && c.leaky_alpha < 1.0)) throw Error("network.leaky_alpha must be in [0,1)");
  if (c.max_steps <= 0) throw Error("grid.max_steps must be positive");
  if (!(c.synthetic_noise >= 0.0)) throw Error("data.synthetic_noise must be non-negative");
  if (c.domain == Domain::Classification) {
    if (c.data_source == DataSource::Idx && (c.images_path.empty() || c.labels_path.empty()))
      throw Error("data.images and data.labels are required when data.source = idx");
    if (c.data_source == DataSource::Synthetic && c.synthetic_per_class == 0)
      throw Error("data.synthetic_per_class must be positive");
  }
  if (c.quick_steps_per_task == 0) throw Error("quick.steps_per_task must be positive");
  agent_config(c, c.seeds.front()).validate();
}

}  // namespace replaylab::harness
