#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "replaylab/memory/selection.hpp"
#include "replaylab/nn/loss.hpp"

namespace replaylab {

/// Prediction error of `net` on one transition, frozen at insertion time.
inline double rank_surprise(const TransitionView& e, const nn::QNetwork& net,
                            SurpriseTarget target = SurpriseTarget::Return, double gamma = 0.95) {
  const Vector q = net.forward(e.state);
  if (e.action >= q.size()) throw Error("action index out of range for network output");
  double y = e.ret;
  if (target == SurpriseTarget::OneStep) {
    y = e.reward;
    if (!e.terminal) {
      const Vector next = net.forward(e.next_state);
      y += gamma * *std::max_element(next.begin(), next.end());
    }
  }
  return std::abs(y - q[e.action]);
}

/// Surprise ranks for a run of experiences, evaluated in one batch. For
/// classification streams the rank is the per-example cross-entropy.
inline std::vector<double> surprise_ranks(const nn::QNetwork& net, std::span<const Experience> batch,
                                          SurpriseTarget target, double gamma,
                                          nn::LossKind loss = nn::LossKind::SquaredTd) {
  if (batch.empty()) return {};
  if (loss == nn::LossKind::SquaredTd && target == SurpriseTarget::OneStep) {
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto& e : batch) out.push_back(rank_surprise(view_of(e), net, target, gamma));
    return out;
  }
  const auto ptrs = nn::pointers_to(batch);
  nn::Workspace ws;
  return nn::compute_loss(net, ptrs, loss, ws, false).per_example;
}

}  // namespace replaylab
