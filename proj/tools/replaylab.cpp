// replaylab command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure (including
// invalid configs and failed checks).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "replaylab/harness/config.hpp"
#include "replaylab/harness/experiment.hpp"
#include "replaylab/harness/grad_check.hpp"
#include "replaylab/harness/metrics.hpp"
#include "replaylab/harness/plot.hpp"
#include "replaylab/memory/snapshot.hpp"

namespace rh = replaylab::harness;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kFailure = 2;

struct RunArgs {
  std::string config;
  bool quick = false;
  bool synthetic = false;
  std::string mnist_images, mnist_labels;
};

int cmd_run(const RunArgs& a) {
  rh::ExperimentConfig cfg = rh::load_config(a.config);
  if (a.synthetic && (!a.mnist_images.empty() || !a.mnist_labels.empty())) {
    std::cerr << "error: --synthetic cannot be combined with --mnist-images/--mnist-labels\n";
    return kUsage;
  }
  if (a.mnist_images.empty() != a.mnist_labels.empty()) {
    std::cerr << "error: --mnist-images and --mnist-labels must be given together\n";
    return kUsage;
  }
  if (a.synthetic) cfg.data_source = rh::DataSource::Synthetic;
  if (!a.mnist_images.empty()) {
    cfg.data_source = rh::DataSource::Idx;
    cfg.images_path = a.mnist_images;
    cfg.labels_path = a.mnist_labels;
  }
  rh::RunOptions opts;
  opts.quick = a.quick;
  opts.log = &std::cerr;
  const auto summary = rh::run_experiment(cfg, opts);
  std::cout << "wrote " << summary.files.size() << " files to " << summary.output_dir.string() << '\n';
  for (const auto& s : summary.seeds) {
    std::cout << "seed " << s.seed << ": final mean success " << rh::fmt6(s.final_mean_success);
    for (const auto& [task, count] : s.composition) std::cout << "  task " << task << ": " << count;
    std::cout << '\n';
  }
  return kOk;
}

int cmd_plot(const std::vector<std::string>& inputs, const std::string& out, const std::string& title, bool smooth) {
  std::vector<rh::Table> tables;
  for (const auto& path : inputs) tables.push_back(rh::read_table(std::filesystem::path(path)));
  rh::PlotOptions opt;
  opt.smooth = smooth;
  if (!title.empty()) opt.title = title;
  const std::string svg = rh::plot_curves(tables, opt);
  std::ofstream os(out, std::ios::binary);
  if (!os || !(os << svg)) throw replaylab::Error("cannot write " + out);
  std::cout << "wrote " << out << '\n';
  return kOk;
}

int cmd_report_buffer(const std::string& path) {
  const auto snap = replaylab::read_snapshot(std::filesystem::path(path));
  std::cout << "kind: " << snap.kind << "\nstrategy: " << snap.strategy << "\ncapacity: "
            << (snap.capacity == 0 ? std::string("unbounded") : std::to_string(snap.capacity))
            << "\nsize: " << snap.records.size() << "\n";
  const auto counts = replaylab::composition_report(snap);
  std::cout << "task_id,count,fraction\n";
  for (const auto& [task, count] : counts) {
    const double frac = snap.records.empty() ? 0.0 : double(count) / double(snap.records.size());
    std::cout << task << ',' << count << ',' << rh::fmt6(frac) << '\n';
  }
  return kOk;
}

int cmd_dump_buffer(const std::string& path, std::size_t limit) {
  const auto snap = replaylab::read_snapshot(std::filesystem::path(path));
  std::cout << "position,task_id,step_index,rank,action,reward,ret,terminal\n";
  std::size_t i = 0;
  for (const auto& r : snap.records) {
    if (limit && i >= limit) break;
    const auto& e = r.experience;
    std::cout << i++ << ',' << e.task_id << ',' << e.step_index << ',' << (r.rank ? rh::fmt6(*r.rank) : "") << ','
              << e.action << ',' << rh::fmt6(e.reward) << ',' << rh::fmt6(e.ret) << ',' << (e.terminal ? 1 : 0)
              << '\n';
  }
  return kOk;
}

int cmd_grad_check(const std::string& arch, std::uint64_t seed, std::size_t batch, double step, std::size_t limit) {
  const auto report = rh::run_grad_check(rh::parse_arch(arch), seed, batch, step, limit);
  std::printf("architecture %s: %zu parameters, %zu checked, %zu skipped at kinks, max relative error %.3e\n",
              arch.c_str(), report.parameters, report.checked, report.skipped, report.max_relative_error);
  const bool pass = report.max_relative_error < 1e-4;
  std::printf("%s (threshold 1e-4)\n", pass ? "PASS" : "FAIL");
  return pass ? kOk : kFailure;
}

int cmd_validate(const std::string& path) {
  rh::ExperimentConfig cfg = rh::load_config(path);
  rh::validate(cfg);
  const auto layout = rh::memory_layout(cfg);
  std::cout << "ok: " << cfg.name << " (" << rh::to_string(cfg.domain) << ", " << rh::to_string(cfg.strategy)
            << ")\n";
  std::cout << "fifo capacity "
            << (layout.fifo_capacity == replaylab::FifoBuffer::kUnbounded ? std::string("unbounded")
                                                                            : std::to_string(layout.fifo_capacity))
            << ", episodic capacity " << layout.episodic_capacity << ", batch " << layout.batch.total << " = "
            << layout.batch.from_fifo << " fifo + " << layout.batch.from_episodic << " episodic\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective experience replay experiments"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Train every seed of an experiment config");
  run_cmd->add_option("config", run.config, "Config file")->required()->check(CLI::ExistingFile);
  run_cmd->add_flag("--quick", run.quick, "Shorten every task to the quick profile");
  run_cmd->add_flag("--synthetic", run.synthetic, "Use the synthetic digit set");
  run_cmd->add_option("--mnist-images", run.mnist_images, "IDX image file");
  run_cmd->add_option("--mnist-labels", run.mnist_labels, "IDX label file");

  std::vector<std::string> plot_inputs;
  std::string plot_out, plot_title;
  bool plot_smooth = false;
  auto* plot_cmd = app.add_subcommand("plot", "Render success curves to SVG");
  plot_cmd->add_option("csv", plot_inputs, "metrics.csv files (averaged) or one aggregate.csv")
      ->required()
      ->check(CLI::ExistingFile);
  plot_cmd->add_option("--out", plot_out, "Output SVG")->required();
  plot_cmd->add_option("--title", plot_title, "Chart title");
  plot_cmd->add_flag("--smooth", plot_smooth, "Moving average over 5 records");

  std::string snapshot;
  auto* report_cmd = app.add_subcommand("report-buffer", "Per-task composition of a buffer snapshot");
  report_cmd->add_option("snapshot", snapshot, "buffer.json")->required()->check(CLI::ExistingFile);

  std::string dump_path;
  std::size_t dump_limit = 0;
  auto* dump_cmd = app.add_subcommand("dump-buffer", "Print the records of a buffer snapshot as CSV");
  dump_cmd->add_option("snapshot", dump_path, "buffer.json")->required()->check(CLI::ExistingFile);
  dump_cmd->add_option("--limit", dump_limit, "Print at most this many records (0 = all)");

  std::string arch = "grid";
  std::uint64_t gc_seed = 1;
  std::size_t gc_batch = 8, gc_limit = 1'000'000;
  double gc_step = 1e-4;
  auto* grad_cmd = app.add_subcommand("grad-check", "Compare backprop against central differences");
  grad_cmd->add_option("--arch", arch, "grid, digits or dense")->check(CLI::IsMember({"grid", "digits", "dense"}));
  grad_cmd->add_option("--seed", gc_seed, "Network and batch seed");
  grad_cmd->add_option("--batch", gc_batch, "Batch size")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--step", gc_step, "Finite-difference step")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--max-params", gc_limit, "Check a random subset above this many parameters")
      ->check(CLI::PositiveNumber);

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate-config", "Parse and validate a config");
  validate_cmd->add_option("config", validate_path, "Config file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*plot_cmd) return cmd_plot(plot_inputs, plot_out, plot_title, plot_smooth);
    if (*report_cmd) return cmd_report_buffer(snapshot);
    if (*dump_cmd) return cmd_dump_buffer(dump_path, dump_limit);
    if (*grad_cmd) return cmd_grad_check(arch, gc_seed, gc_batch, gc_step, gc_limit);
    if (*validate_cmd) return cmd_validate(validate_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
