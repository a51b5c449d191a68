#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "replaylab/harness/experiment.hpp"
#include "replaylab/harness/plot.hpp"

using namespace replaylab;
using namespace replaylab::harness;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" REPLAYLAB_CLI "\" " + args + " 2>&1";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (const std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string error_of(const std::string& text) {
  try {
    validate(parse_config(text));
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("replaylab_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

const char* kTinyGrid = R"(
experiment.name = tiny
experiment.domain = gridworld
experiment.strategy = coverage
experiment.tasks = 0,1
experiment.steps_per_task = 60,60
experiment.seeds = 1,2
agent.eval_every = 30
agent.eval_episodes = 2
memory.fifo_capacity = 10
memory.episodic_capacity = 20
)";

EvalRecord record(std::uint64_t step, TaskId task, std::vector<double> success) {
  EvalRecord r;
  r.global_step = step;
  r.training_task = task;
  r.per_task_mean_return.assign(success.size(), 0.0);
  r.per_task_success = std::move(success);
  return r;
}

// Minimal well-formedness: every element closes in order and attributes are quoted.
bool balanced_xml(const std::string& s) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  while ((i = s.find('<', i)) != std::string::npos) {
    const std::size_t end = s.find('>', i);
    if (end == std::string::npos) return false;
    const std::string tag = s.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?') continue;
    std::size_t quotes = 0;
    for (char c : tag) quotes += c == '"' ? 1 : 0;
    if (quotes % 2) return false;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
    } else if (tag.back() != '/') {
      stack.push_back(tag.substr(0, tag.find(' ')));
    }
  }
  return stack.empty();
}

std::size_t count_of(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t i = 0; (i = s.find(needle, i)) != std::string::npos; i += needle.size()) ++n;
  return n;
}

}  // namespace

TEST(Config, ParsesKeysAndComments) {
  const auto cfg = parse_config("experiment.name = a  # trailing\n\n# whole line\nexperiment.seeds = 4, 5\n");
  EXPECT_EQ(cfg.name, "a");
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_TRUE(cfg.is_explicit("experiment.seeds"));
  EXPECT_FALSE(cfg.is_explicit("agent.gamma"));
}

TEST(Config, ErrorsNameTheKey) {
  const auto msg = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(msg("agent.gama = 0.9\n").find("agent.gama"), std::string::npos);
  EXPECT_NE(msg("agent.gamma = fast\n").find("agent.gamma"), std::string::npos);
  EXPECT_NE(msg("agent.gamma = 0.9\nagent.gamma = 0.8\n").find("agent.gamma"), std::string::npos);
  EXPECT_NE(msg("memory.batch_total =\n").find("memory.batch_total"), std::string::npos);
  EXPECT_NE(msg("just words\n").find("line 1"), std::string::npos);
  EXPECT_NE(msg("experiment.strategy = greedy\n").find("experiment.strategy"), std::string::npos);
}

TEST(Config, ValidationMessagesStartWithTheKey) {
  EXPECT_EQ(error_of("memory.batch_total = 60\nmemory.batch_fifo = 40\nmemory.batch_episodic = 30\n")
                .rfind("memory.batch_total", 0),
            0u);
  EXPECT_EQ(error_of("experiment.tasks = 0,3\nexperiment.steps_per_task = 5,5\n").rfind("experiment.tasks", 0), 0u);
  EXPECT_EQ(error_of("experiment.seeds = 1,1\n").rfind("experiment.seeds", 0), 0u);
  EXPECT_EQ(error_of("experiment.steps_per_task = 5\nexperiment.tasks = 0,1\n").rfind("experiment.steps_per_task", 0),
            0u);
  EXPECT_EQ(error_of("experiment.strategy = unlimited\nmemory.fifo_capacity = 50\n").rfind("memory.fifo_capacity", 0),
            0u);
  EXPECT_EQ(error_of(""), "");
}

TEST(Config, MemoryLayoutPresets) {
  const auto layout = [](const std::string& strategy) {
    return memory_layout(parse_config("experiment.strategy = " + strategy + "\n"));
  };
  const auto fifo = layout("fifo-only");
  EXPECT_EQ(fifo.fifo_capacity, 1000u);
  EXPECT_EQ(fifo.episodic_capacity, 0u);
  EXPECT_EQ(fifo.batch.from_fifo, 60u);
  const auto unlimited = layout("unlimited");
  EXPECT_EQ(unlimited.fifo_capacity, FifoBuffer::kUnbounded);
  EXPECT_EQ(unlimited.batch.from_fifo, 60u);
  for (const char* s : {"surprise", "reward", "matching", "coverage"}) {
    const auto m = layout(s);
    EXPECT_EQ(m.fifo_capacity, 100u) << s;
    EXPECT_EQ(m.episodic_capacity, 900u) << s;
    EXPECT_EQ(m.batch.from_fifo, 30u) << s;
    EXPECT_EQ(m.batch.from_episodic, 30u) << s;
  }
  const auto sel = layout("selective-only");
  EXPECT_EQ(sel.episodic_capacity, 1000u);
  EXPECT_EQ(sel.batch.from_fifo, 0u);
  EXPECT_EQ(sel.batch.from_episodic, 60u);
}

TEST(Config, ClassificationDefaults) {
  const auto cfg = parse_config("experiment.domain = classification\n");
  EXPECT_EQ(cfg.tasks, (std::vector<TaskId>{0, 1, 2, 3, 4}));
  EXPECT_EQ(cfg.steps_per_task, std::vector<std::size_t>(5, 1000));
  EXPECT_EQ(cfg.optimizer, nn::OptimizerKind::SGD);
  const auto kept = parse_config("optimizer.learning_rate = 0.5\nexperiment.domain = classification\n");
  EXPECT_EQ(kept.learning_rate, 0.5);
}

TEST(Config, ShippedConfigsValidate) {
  std::size_t n = 0;
  for (const auto& entry : fs::directory_iterator(REPLAYLAB_CONFIG_DIR)) {
    if (entry.path().extension() != ".cfg") continue;
    ++n;
    EXPECT_NO_THROW(validate(load_config(entry.path()))) << entry.path();
  }
  EXPECT_GE(n, 7u);
}

TEST(Config, TextRoundTrip) {
  const auto cfg = load_config(fs::path(REPLAYLAB_CONFIG_DIR) / "grid_coverage.cfg");
  const auto again = parse_config(config_text(cfg));
  EXPECT_EQ(config_values(again), config_values(cfg));
}

TEST(Forgetting, Examples) {
  // Peak 0.8 while training task 0, final 0.2.
  const std::vector<EvalRecord> records{record(100, 0, {0.8, 0.0}), record(200, 1, {0.2, 0.9})};
  const auto f = forgetting_score(records);
  EXPECT_DOUBLE_EQ(f.at(0), 0.25);
  EXPECT_DOUBLE_EQ(f.at(1), 1.0);
  const std::vector<EvalRecord> flat{record(100, 0, {0.0}), record(200, 0, {0.0})};
  EXPECT_DOUBLE_EQ(forgetting_score(flat).at(0), 1.0);
}

TEST(Forgetting, NeverForgottenScoresOne) {
  std::vector<EvalRecord> records;
  for (int i = 1; i <= 10; ++i) records.push_back(record(i * 10u, i <= 5 ? 0 : 1, {i / 10.0, i / 20.0}));
  for (const auto& [task, score] : forgetting_score(records)) EXPECT_DOUBLE_EQ(score, 1.0) << task;
}

TEST(Metrics, CsvRoundTrip) {
  std::vector<EvalRecord> records{record(30, 0, {0.5, 0.25}), record(60, 1, {0.125, 1.0})};
  records[1].max_td_error_seen = 2.5;
  records[1].loss_ma = 0.75;
  std::stringstream ss;
  write_metrics_csv(ss, records, 2);
  const auto back = records_from_table(read_table(ss));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].per_task_success, records[1].per_task_success);
  EXPECT_EQ(back[1].max_td_error_seen, 2.5);
  EXPECT_EQ(back[1].loss_ma, 0.75);
  std::stringstream short_row("a,b\n1\n");
  EXPECT_THROW(read_table(short_row), Error);
  std::stringstream words("a,b\n1,x\n");
  EXPECT_THROW(read_table(words), Error);
}

TEST(Metrics, AggregateOfTwoSeeds) {
  Table a{{"global_step", "training_task", "v"}, {{10, 0, 1.0}, {20, 0, 2.0}}};
  Table b{{"global_step", "training_task", "v"}, {{10, 0, 3.0}, {20, 0, 2.0}}};
  const Table agg = aggregate_tables({a, b});
  EXPECT_EQ(agg.columns, (std::vector<std::string>{"global_step", "training_task", "v_mean", "v_std"}));
  EXPECT_DOUBLE_EQ(agg.rows[0][2], 2.0);
  EXPECT_DOUBLE_EQ(agg.rows[0][3], std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(agg.rows[1][3], 0.0);
  b.rows[1][0] = 21;
  EXPECT_THROW(aggregate_tables({a, b}), Error);
}

TEST(Plot, ErrorsAndShape) {
  Table empty{metrics_header(1), {}};
  try {
    plot_curves({empty});
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "no data rows");
  }
  Table one{metrics_header(1), {{10, 0, 0.5, 0.1, 0.0, 0.0}, {20, 0, 0.75, 0.2, 0.0, 0.0}}};
  Table two{metrics_header(2), {{10, 0, 0.5, 0.5, 0.1, 0.1, 0.0, 0.0}}};
  try {
    plot_curves({one, two});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("schema mismatch"), std::string::npos);
  }
  const std::string svg = plot_curves({one});
  EXPECT_TRUE(balanced_xml(svg));
  EXPECT_EQ(count_of(svg, "class=\"task-line\""), 1u);
  EXPECT_EQ(count_of(svg, "class=\"band\""), 1u);
  EXPECT_EQ(count_of(svg, "class=\"envelope\""), 0u);
  const std::string avg = plot_curves({one, one});
  EXPECT_TRUE(balanced_xml(avg));
  EXPECT_EQ(count_of(avg, "class=\"envelope\""), 1u);
}

TEST(Plot, OneBandPerTrainingStretch) {
  Table t{metrics_header(2),
          {{10, 0, 0, 0, 0, 0, 0, 0}, {20, 0, 0, 0, 0, 0, 0, 0}, {30, 1, 0, 0, 0, 0, 0, 0}, {40, 1, 0, 0, 0, 0, 0, 0}}};
  PlotOptions opt;
  opt.title = "a < b & c";
  opt.smooth = true;
  const std::string svg = plot_curves({t}, opt);
  EXPECT_TRUE(balanced_xml(svg));
  EXPECT_EQ(count_of(svg, "class=\"band\""), 2u);
  EXPECT_EQ(count_of(svg, "class=\"task-line\""), 2u);
  EXPECT_NE(svg.find("a &lt; b &amp; c"), std::string::npos);
}

TEST(Experiment, OutputsMatchTheManifestAndAggregate) {
  auto cfg = parse_config(kTinyGrid);
  cfg.output_dir = scratch("outputs").string();
  const auto summary = run_experiment(cfg);

  std::set<std::string> on_disk;
  for (const auto& e : fs::recursive_directory_iterator(summary.output_dir))
    if (e.is_regular_file()) on_disk.insert(fs::relative(e.path(), summary.output_dir).generic_string());
  const auto manifest = nlohmann::json::parse(slurp(summary.output_dir / "manifest.json"));
  const auto listed = manifest.at("files").get<std::vector<std::string>>();
  EXPECT_EQ(std::set<std::string>(listed.begin(), listed.end()), on_disk);
  EXPECT_EQ(manifest.at("seeds"), nlohmann::json({1, 2}));
  EXPECT_EQ(manifest.at("config").at("experiment.strategy"), "coverage");

  // Recompute mean and sample std from the per-seed files.
  const Table s1 = read_table(summary.output_dir / "seed_1" / "metrics.csv");
  const Table s2 = read_table(summary.output_dir / "seed_2" / "metrics.csv");
  const Table agg = read_table(summary.output_dir / "aggregate.csv");
  ASSERT_EQ(s1.rows.size(), 4u);
  ASSERT_EQ(agg.rows.size(), s1.rows.size());
  for (std::size_t i = 0; i < s1.rows.size(); ++i) {
    for (std::size_t c = 2; c < s1.columns.size(); ++c) {
      const double x = s1.rows[i][c], y = s2.rows[i][c];
      const double mean = (x + y) / 2.0;
      const double sd = std::abs(x - y) / std::sqrt(2.0);
      const std::size_t mc = agg.column(s1.columns[c] + "_mean"), sc = agg.column(s1.columns[c] + "_std");
      EXPECT_NEAR(summary.aggregate.rows[i][mc], mean, 1e-9);
      EXPECT_NEAR(summary.aggregate.rows[i][sc], sd, 1e-9);
      EXPECT_NEAR(agg.rows[i][mc], mean, 5e-6 * std::max(1.0, std::abs(mean)));
      EXPECT_NEAR(agg.rows[i][sc], sd, 5e-6 * std::max(1.0, sd));
    }
  }
  const Table comp = read_table(summary.output_dir / "seed_1" / "composition.csv");
  double stored = 0.0;
  for (double v : comp.values("count")) stored += v;
  EXPECT_EQ(stored, 20.0);
  fs::remove_all(summary.output_dir);
}

TEST(Experiment, RerunIsByteIdentical) {
  auto cfg = parse_config(kTinyGrid);
  cfg.output_dir = scratch("rerun_a").string();
  run_experiment(cfg);
  const fs::path a = cfg.output_dir;
  cfg.output_dir = scratch("rerun_b").string();
  run_experiment(cfg);
  const fs::path b = cfg.output_dir;
  for (const auto& f : planned_files(cfg)) {
    if (f == "manifest.json") continue;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Experiment, UnwritableOutputFailsBeforeTraining) {
  const fs::path blocker = scratch("blocker");
  std::ofstream(blocker) << "a file, not a directory";
  auto cfg = parse_config(kTinyGrid);
  cfg.output_dir = (blocker / "sub").string();
  EXPECT_THROW(run_experiment(cfg), Error);
  fs::remove(blocker);
}

TEST(Experiment, ClassificationRunOnSyntheticDigits) {
  auto cfg = parse_config(R"(
experiment.domain = classification
experiment.strategy = matching
experiment.tasks = 0,1
experiment.steps_per_task = 20,20
experiment.seeds = 3
agent.eval_every = 20
data.synthetic_per_class = 5
data.synthetic_test_per_class = 2
)");
  cfg.output_dir = scratch("digits").string();
  const auto summary = run_experiment(cfg);
  ASSERT_EQ(summary.seeds.size(), 1u);
  EXPECT_EQ(summary.seeds[0].records.size(), 2u);
  EXPECT_EQ(summary.seeds[0].records[0].per_task_success.size(), 5u);
  fs::remove_all(cfg.output_dir);
}

TEST(Cli, ValidateConfig) {
  const auto ok = run_cli("validate-config \"" REPLAYLAB_CONFIG_DIR "/grid_matching.cfg\"");
  EXPECT_EQ(ok.code, 0) << ok.output;
  const fs::path bad = scratch("bad.cfg");
  std::ofstream(bad) << "memory.batch_total = 60\nmemory.batch_fifo = 50\nmemory.batch_episodic = 30\n";
  const auto r = run_cli("validate-config \"" + bad.string() + "\"");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.output.find("memory.batch_"), std::string::npos) << r.output;
  fs::remove(bad);
  EXPECT_EQ(run_cli("no-such-command").code, 1);
}

TEST(Cli, GradCheckPasses) {
  const auto r = run_cli("grad-check --arch dense");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("PASS"), std::string::npos);
}

TEST(Cli, OutputDirectoryOverride) {
  const fs::path cfg_path = scratch("override.cfg");
  std::ofstream(cfg_path) << kTinyGrid << "experiment.output_dir = /nonexistent/never/used\n";
  const fs::path out = scratch("override_out");
  const auto r = run_cli("run \"" + cfg_path.string() + "\"", std::string(kOutputEnv) + "=\"" + out.string() + "\"");
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
  EXPECT_TRUE(fs::exists(out / "seed_2" / "buffer.json"));

  const auto report = run_cli("report-buffer \"" + (out / "seed_1" / "buffer.json").string() + "\"");
  EXPECT_EQ(report.code, 0);
  EXPECT_NE(report.output.find("strategy: coverage"), std::string::npos) << report.output;
  const auto plot = run_cli("plot \"" + (out / "aggregate.csv").string() + "\" --out \"" + (out / "c.svg").string() + "\"");
  EXPECT_EQ(plot.code, 0) << plot.output;
  EXPECT_TRUE(balanced_xml(slurp(out / "c.svg")));

  const fs::path blocker = scratch("cli_blocker");
  std::ofstream(blocker) << "x";
  const auto fail = run_cli("run \"" + cfg_path.string() + "\"",
                            std::string(kOutputEnv) + "=\"" + (blocker / "sub").string() + "\"");
  EXPECT_EQ(fail.code, 2);
  EXPECT_NE(fail.output.find("cannot create output directory"), std::string::npos) << fail.output;
  EXPECT_EQ(fail.output.find("training"), std::string::npos) << fail.output;
  fs::remove_all(out);
  fs::remove(cfg_path);
  fs::remove(blocker);
}
