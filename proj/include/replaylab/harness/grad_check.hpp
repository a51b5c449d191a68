#pragma once

#include <random>
#include <string>
#include <vector>

#include "replaylab/envs/digits.hpp"
#include "replaylab/envs/grid_world.hpp"
#include "replaylab/nn/gradient_check.hpp"

namespace replaylab::harness {

enum class CheckArch { Grid, Digits, Dense };

inline CheckArch parse_arch(const std::string& s) {
  if (s == "grid") return CheckArch::Grid;
  if (s == "digits") return CheckArch::Digits;
  if (s == "dense") return CheckArch::Dense;
  throw Error("unknown architecture '" + s + "' (expected grid, digits or dense)");
}

/// A freshly initialized network of the given architecture.
inline nn::QNetwork check_network(CheckArch arch, std::uint64_t seed) {
  nn::QNetwork net;
  switch (arch) {
    case CheckArch::Grid:
      net = nn::QNetwork({GridWorld::kSize, GridWorld::kSize, 3}, nn::conv_q_architecture(6, 3, GridWorld::kNumActions));
      break;
    case CheckArch::Digits:
      net = nn::QNetwork({28, 28, 1}, nn::conv_q_architecture(5, 5, kNumDigitClasses));
      break;
    case CheckArch::Dense:
      net = nn::QNetwork({1, 1, 6}, {nn::LayerSpec::dense(8), nn::LayerSpec::dense(5), nn::LayerSpec::output(3)});
      break;
  }
  net.initialize(seed);
  return net;
}

/// Random experiences shaped for `net`: grid observations come from random
/// walks, other inputs are uniform in [0,1]; targets are uniform in [-1,1].
inline std::vector<Experience> random_batch(CheckArch arch, const nn::QNetwork& net, std::size_t n,
                                            std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0), target(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> action(0, net.output_size() - 1);
  std::vector<Experience> batch(n);
  for (auto& e : batch) {
    if (arch == CheckArch::Grid) {
      GridWorld env;
      std::uniform_int_distribution<std::size_t> task(0, GridWorld::kNumTasks - 1);
      e.state = env.reset(task(rng), rng);
      std::uniform_int_distribution<int> walk(0, 30);
      for (int k = walk(rng); k > 0 && !env.done(); --k) {
        const StepResult r = env.step(action(rng) % GridWorld::kNumActions);
        if (!r.done()) e.state = r.observation;
      }
    } else {
      e.state.resize(net.input_size());
      for (double& x : e.state) x = unit(rng);
    }
    e.action = action(rng);
    e.ret = target(rng);
    e.next_state.assign(e.state.size(), 0.0);
  }
  return batch;
}

struct GradCheckReport {
  std::size_t parameters = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double max_relative_error = 0.0;
};

/// Central-difference check of every parameter (or a random subset of
/// `limit` when the network is larger) on one random batch. Parameters whose
/// perturbation crosses a leaky kink are counted in `skipped`.
inline GradCheckReport run_grad_check(CheckArch arch, std::uint64_t seed, std::size_t batch_size = 8,
                                      double step = 1e-4, std::size_t limit = 1'000'000,
                                      nn::LossKind loss = nn::LossKind::SquaredTd) {
  const nn::QNetwork net = check_network(arch, seed);
  std::mt19937_64 rng(seed ^ 0xc0ffee);
  const auto batch = random_batch(arch, net, batch_size, rng);
  nn::GradientCheckOptions opts;
  opts.loss = loss;
  opts.full_check_limit = limit;
  opts.subset_size = limit;
  opts.subset_seed = seed;
  GradCheckReport r;
  r.parameters = net.parameter_count();
  const auto res = nn::gradient_check_report(net, batch, step, opts);
  r.checked = res.checked;
  r.skipped = res.skipped;
  r.max_relative_error = res.max_relative_error;
  return r;
}

}  // namespace replaylab::harness
