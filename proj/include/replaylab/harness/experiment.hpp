#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "replaylab/agent/lifelong.hpp"
#include "replaylab/envs/digits.hpp"
#include "replaylab/envs/grid_world.hpp"
#include "replaylab/envs/idx.hpp"
#include "replaylab/harness/config.hpp"
#include "replaylab/harness/metrics.hpp"
#include "replaylab/memory/snapshot.hpp"

namespace replaylab::harness {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputEnv = "REPLAYLAB_OUT";

struct RunOptions {
  bool quick = false;
  std::ostream* log = nullptr;  // progress lines; null for silence
};

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<EvalRecord> records;
  std::vector<TdTracePoint> td_trace;
  BufferSnapshot buffer;  // the episodic store, or the FIFO for FIFO-only runs
  std::map<TaskId, std::size_t> composition;
  std::map<TaskId, double> retention;
  double final_mean_success = 0.0;
};

struct RunSummary {
  std::filesystem::path output_dir;
  std::vector<SeedResult> seeds;
  Table aggregate;
  std::vector<std::string> files;  // relative to output_dir, sorted
};

/// The output directory after the environment override.
inline std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  if (const char* env = std::getenv(kOutputEnv); env != nullptr && *env != '\0') return env;
  return cfg.output_dir;
}

inline std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

/// Every file a run writes, relative to the output directory, sorted.
inline std::vector<std::string> planned_files(const ExperimentConfig& cfg) {
  std::vector<std::string> files{"aggregate.csv", "composition_summary.csv", "manifest.json", "summary.csv"};
  for (const auto s : cfg.seeds)
    for (const char* f : {"buffer.json", "composition.csv", "max_td.csv", "metrics.csv"})
      files.push_back(seed_dir(s) + "/" + f);
  std::sort(files.begin(), files.end());
  return files;
}

/// Tasks are evaluated by id, 0 through the largest scheduled task.
inline std::size_t evaluated_tasks(const ExperimentConfig& cfg) {
  if (cfg.domain == Domain::Classification) return kNumDigitTasks;
  return *std::max_element(cfg.tasks.begin(), cfg.tasks.end()) + 1;
}

struct DigitData {
  ImageDataset train;
  ImageDataset test;
};

/// Synthetic digits, or IDX files. Without test files every seventh IDX
/// example is held out for evaluation.
inline DigitData load_digit_data(const ExperimentConfig& cfg) {
  DigitData d;
  if (cfg.data_source == DataSource::Synthetic) {
    std::seed_seq train_seq{cfg.data_seed, std::uint64_t{1}};
    std::seed_seq test_seq{cfg.data_seed, std::uint64_t{2}};
    std::mt19937_64 train_rng(train_seq), test_rng(test_seq);
    d.train = synthetic_digits(train_rng, cfg.synthetic_per_class, cfg.synthetic_noise);
    d.test = synthetic_digits(test_rng, cfg.synthetic_test_per_class, cfg.synthetic_noise);
    return d;
  }
  ImageDataset all = load_idx(cfg.images_path, cfg.labels_path);
  if (!cfg.test_images_path.empty() || !cfg.test_labels_path.empty()) {
    d.train = std::move(all);
    d.test = load_idx(cfg.test_images_path, cfg.test_labels_path);
  } else {
    d.train.rows = d.test.rows = all.rows;
    d.train.cols = d.test.cols = all.cols;
    for (std::size_t i = 0; i < all.size(); ++i)
      (i % 7 == 6 ? d.test : d.train).examples.push_back(std::move(all.examples[i]));
  }
  if (d.train.rows != d.test.rows || d.train.cols != d.test.cols) throw Error("train and test image sizes differ");
  return d;
}

inline nlohmann::json manifest_json(const ExperimentConfig& cfg, const std::vector<std::string>& files) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
  nlohmann::json j;
  j["format"] = "replaylab.manifest";
  j["software_version"] = kVersion;
  j["started_at"] = stamp;
  j["config"] = config_values(cfg);
  j["seeds"] = cfg.seeds;
  j["files"] = files;
  return j;
}

namespace detail {

template <class Fn>
void write_file(const std::filesystem::path& path, Fn&& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  body(os);
  if (!os) throw Error("failed writing " + path.string());
}

inline void write_composition(std::ostream& os, const std::map<TaskId, std::size_t>& counts, std::size_t num_tasks) {
  os << "task_id,count\n";
  for (TaskId t = 0; t < num_tasks; ++t) os << t << ',' << (counts.count(t) ? counts.at(t) : 0) << '\n';
}

}  // namespace detail

/// Runs one seed in memory; no files are touched.
inline SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const DigitData* digits = nullptr) {
  const AgentConfig agent = agent_config(cfg, seed);
  SeedResult out;
  out.seed = seed;
  LifelongResult res;
  if (cfg.domain == Domain::GridWorld) {
    const GridWorld env(GridRewards{cfg.goal_reward, cfg.step_cost}, cfg.max_steps);
    nn::QNetwork net({GridWorld::kSize, GridWorld::kSize, 3}, nn::conv_q_architecture(6, 3, GridWorld::kNumActions),
                     cfg.leaky_alpha);
    net.initialize(seed);
    std::vector<TaskId> eval(evaluated_tasks(cfg));
    for (std::size_t t = 0; t < eval.size(); ++t) eval[t] = t;
    res = train_lifelong(env, cfg.tasks, cfg.steps_per_task, agent, std::move(net), grid_coverage_feature, seed, eval);
  } else {
    std::optional<DigitData> local;
    if (digits == nullptr) digits = &local.emplace(load_digit_data(cfg));
    nn::QNetwork net({digits->train.rows, digits->train.cols, 1}, nn::conv_q_architecture(5, 5, kNumDigitClasses),
                     cfg.leaky_alpha);
    net.initialize(seed);
    res = train_lifelong_classification(digits->train, digits->test, cfg.tasks, cfg.steps_per_task, agent,
                                        std::move(net), digit_coverage_feature, seed);
  }
  out.records = std::move(res.records);
  out.td_trace = std::move(res.td_trace);
  out.buffer = res.episodic ? snapshot_of(*res.episodic) : snapshot_of(res.fifo);
  out.composition = composition_report(out.buffer);
  out.retention = forgetting_score(out.records);
  out.final_mean_success = final_mean_success(out.records);
  return out;
}

/// Validates, writes the manifest, trains every seed and writes all
/// outputs. Fails before any training if the output directory is unusable.
inline RunSummary run_experiment(ExperimentConfig cfg, const RunOptions& opts = {}) {
  if (opts.quick) apply_quick(cfg);
  validate(cfg);
  RunSummary summary;
  summary.output_dir = resolve_output_dir(cfg);
  cfg.output_dir = summary.output_dir.string();
  summary.files = planned_files(cfg);
  const auto& dir = summary.output_dir;
  try {
    std::filesystem::create_directories(dir);
    for (const auto s : cfg.seeds) std::filesystem::create_directories(dir / seed_dir(s));
  } catch (const std::filesystem::filesystem_error& e) {
    throw Error("cannot create output directory " + dir.string() + ": " + e.code().message());
  }
  detail::write_file(dir / "manifest.json",
                     [&](std::ostream& os) { os << manifest_json(cfg, summary.files).dump(2) << '\n'; });

  std::optional<DigitData> digits;
  if (cfg.domain == Domain::Classification) digits = load_digit_data(cfg);
  const std::size_t num_tasks = evaluated_tasks(cfg);

  std::vector<Table> tables;
  for (const auto seed : cfg.seeds) {
    if (opts.log) *opts.log << "[" << cfg.name << "] seed " << seed << ": training" << std::endl;
    SeedResult r = run_seed(cfg, seed, digits ? &*digits : nullptr);
    const auto sdir = dir / seed_dir(seed);
    std::ostringstream metrics;
    write_metrics_csv(metrics, r.records, num_tasks);
    detail::write_file(sdir / "metrics.csv", [&](std::ostream& os) { os << metrics.str(); });
    detail::write_file(sdir / "max_td.csv", [&](std::ostream& os) {
      os << "global_step,max_abs_td_error\n";
      for (const auto& p : r.td_trace) os << p.global_step << ',' << fmt6(p.max_abs_error) << '\n';
    });
    detail::write_file(sdir / "composition.csv",
                       [&](std::ostream& os) { detail::write_composition(os, r.composition, num_tasks); });
    write_snapshot(r.buffer, sdir / "buffer.json");
    std::istringstream back(metrics.str());
    tables.push_back(read_table(back, "metrics"));
    if (opts.log) {
      *opts.log << "[" << cfg.name << "] seed " << seed << ": final mean success " << fmt6(r.final_mean_success);
      for (const auto& [t, v] : r.retention) *opts.log << ", retention task " << t << ' ' << fmt6(v);
      *opts.log << std::endl;
    }
    summary.seeds.push_back(std::move(r));
  }

  summary.aggregate = aggregate_tables(tables);
  detail::write_file(dir / "aggregate.csv", [&](std::ostream& os) { write_table(os, summary.aggregate); });
  detail::write_file(dir / "composition_summary.csv", [&](std::ostream& os) {
    os << "task_id,mean,std";
    for (const auto& s : summary.seeds) os << ",seed_" << s.seed;
    os << '\n';
    for (TaskId t = 0; t < num_tasks; ++t) {
      std::vector<double> counts;
      for (const auto& s : summary.seeds) counts.push_back(s.composition.count(t) ? double(s.composition.at(t)) : 0.0);
      const MeanStd ms = mean_std(counts);
      os << t << ',' << fmt6(ms.mean) << ',' << fmt6(ms.std);
      for (const double c : counts) os << ',' << fmt6(c);
      os << '\n';
    }
  });
  detail::write_file(dir / "summary.csv", [&](std::ostream& os) {
    os << "seed,final_mean_success";
    for (TaskId t = 0; t < num_tasks; ++t) os << ",retention_task_" << t;
    os << '\n';
    for (const auto& s : summary.seeds) {
      os << s.seed << ',' << fmt6(s.final_mean_success);
      for (TaskId t = 0; t < num_tasks; ++t) os << ',' << fmt6(s.retention.count(t) ? s.retention.at(t) : 1.0);
      os << '\n';
    }
  });
  return summary;
}

}  // namespace replaylab::harness
