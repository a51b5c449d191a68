#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "replaylab/nn/loss.hpp"

namespace replaylab::nn {

struct GradientCheckOptions {
  LossKind loss = LossKind::SquaredTd;
  std::size_t full_check_limit = 10000;  // above this, check a random subset
  std::size_t subset_size = 200;
  std::uint64_t subset_seed = 0;
  // Gradients below this magnitude are compared absolutely: central
  // differences cannot resolve them to better than roundoff.
  double floor = 1e-7;
  bool skip_kinks = true;
};

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbations that moved a unit across the leaky kink
};

namespace detail {

// Bit per leaky unit of the last forward pass in `ws`: set when positive.
inline std::vector<bool> kink_signs(const QNetwork& net, const Workspace& ws) {
  std::vector<bool> out;
  for (std::size_t l = 0; l < net.plan().size(); ++l) {
    if (net.plan()[l].spec.activation != Activation::LeakyReLU) continue;
    const Matrix& y = ws.activations[l + 1];
    for (Eigen::Index i = 0; i < y.size(); ++i) out.push_back(y.data()[i] > 0.0);
  }
  return out;
}

}  // namespace detail

/// Compares the backpropagated gradient with central differences of the
/// given step. The error of one parameter is |g_a - g_n| / max(|g_a|, |g_n|,
/// floor). With `skip_kinks`, parameters whose perturbation changes the sign
/// of any leaky unit are left out, since the loss is not differentiable
/// across that interval.
inline GradientCheckResult gradient_check_report(const QNetwork& net, std::span<const Experience* const> batch,
                                                 double step, const GradientCheckOptions& opts = {}) {
  if (!(step > 0.0)) throw Error("finite-difference step must be positive");
  QNetwork probe = net;
  Workspace ws;
  const ParamVector analytic = compute_loss(probe, batch, opts.loss, ws).gradient;
  const std::vector<bool> base = opts.skip_kinks ? detail::kink_signs(probe, ws) : std::vector<bool>{};

  std::vector<std::size_t> indices(probe.parameter_count());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  if (indices.size() > opts.full_check_limit) {
    std::mt19937_64 rng(opts.subset_seed);
    std::shuffle(indices.begin(), indices.end(), rng);
    indices.resize(opts.subset_size);
  }

  GradientCheckResult r;
  auto& theta = probe.parameters();
  for (const std::size_t i : indices) {
    const auto k = static_cast<Eigen::Index>(i);
    const double saved = theta[k];
    theta[k] = saved + step;
    const double up = compute_loss(probe, batch, opts.loss, ws, false).loss;
    bool kink = opts.skip_kinks && detail::kink_signs(probe, ws) != base;
    theta[k] = saved - step;
    const double down = compute_loss(probe, batch, opts.loss, ws, false).loss;
    kink = kink || (opts.skip_kinks && detail::kink_signs(probe, ws) != base);
    theta[k] = saved;
    if (kink) {
      ++r.skipped;
      continue;
    }
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[k];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
    r.max_relative_error = std::max(r.max_relative_error, rel);
    ++r.checked;
  }
  return r;
}

/// Largest relative error of gradient_check_report.
inline double gradient_check(const QNetwork& net, std::span<const Experience* const> batch, double step,
                             const GradientCheckOptions& opts = {}) {
  return gradient_check_report(net, batch, step, opts).max_relative_error;
}

inline GradientCheckResult gradient_check_report(const QNetwork& net, std::span<const Experience> batch, double step,
                                                 const GradientCheckOptions& opts = {}) {
  const auto ptrs = pointers_to(batch);
  return gradient_check_report(net, std::span<const Experience* const>(ptrs), step, opts);
}

inline double gradient_check(const QNetwork& net, std::span<const Experience> batch, double step,
                             const GradientCheckOptions& opts = {}) {
  const auto ptrs = pointers_to(batch);
  return gradient_check(net, std::span<const Experience* const>(ptrs), step, opts);
}

}  // namespace replaylab::nn
