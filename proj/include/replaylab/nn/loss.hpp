#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "replaylab/nn/network.hpp"

namespace replaylab::nn {

enum class LossKind {
  SquaredTd,     // mean (ret - Q(s,a))^2 on the selected action
  CrossEntropy,  // softmax cross-entropy with `action` as the class label
};

struct LossResult {
  double loss = 0.0;
  ParamVector gradient;
  // Squared TD: |ret - Q(s,a)|. Cross-entropy: per-example loss.
  Vector per_example;
  double max_abs_error = 0.0;
};

inline Matrix stack_states(std::span<const Experience* const> batch, std::size_t width) {
  Matrix m(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i]->state;
    if (s.size() != width) throw Error("state length does not match network input");
    std::copy(s.begin(), s.end(), m.row(static_cast<Eigen::Index>(i)).data());
  }
  return m;
}

/// Loss on a minibatch; the gradient is only computed when `with_gradient`.
inline LossResult compute_loss(const QNetwork& net, std::span<const Experience* const> batch, LossKind kind,
                               Workspace& ws, bool with_gradient = true) {
  if (batch.empty()) throw Error("empty batch");
  const Matrix inputs = stack_states(batch, net.input_size());
  const Matrix& out = net.forward_batch(inputs, ws);
  const auto n = static_cast<double>(batch.size());
  LossResult result;
  result.per_example.resize(batch.size());
  Matrix dout = Matrix::Zero(out.rows(), out.cols());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Experience& e = *batch[i];
    const auto row = static_cast<Eigen::Index>(i);
    if (e.action >= net.output_size()) throw Error("action index out of range for network output");
    const auto a = static_cast<Eigen::Index>(e.action);
    if (kind == LossKind::SquaredTd) {
      const double err = out(row, a) - e.ret;
      result.loss += err * err;
      dout(row, a) = 2.0 * err / n;
      result.per_example[i] = std::abs(err);
    } else {
      const double peak = out.row(row).maxCoeff();
      double z = 0.0;
      for (Eigen::Index k = 0; k < out.cols(); ++k) z += std::exp(out(row, k) - peak);
      const double log_z = peak + std::log(z);
      const double nll = log_z - out(row, a);
      result.loss += nll;
      result.per_example[i] = nll;
      for (Eigen::Index k = 0; k < out.cols(); ++k) dout(row, k) = std::exp(out(row, k) - log_z) / n;
      dout(row, a) -= 1.0 / n;
    }
  }
  result.loss /= n;
  result.max_abs_error = *std::max_element(result.per_example.begin(), result.per_example.end());
  if (with_gradient) net.backward(dout, ws, result.gradient);
  return result;
}

inline std::vector<const Experience*> pointers_to(std::span<const Experience> batch) {
  std::vector<const Experience*> out;
  out.reserve(batch.size());
  for (const auto& e : batch) out.push_back(&e);
  return out;
}

/// Mean squared error between precomputed returns and Q(s, a), with its
/// parameter gradient.
inline LossResult td_loss(const QNetwork& net, std::span<const Experience* const> batch) {
  Workspace ws;
  return compute_loss(net, batch, LossKind::SquaredTd, ws);
}

inline LossResult td_loss(const QNetwork& net, std::span<const Experience> batch) {
  const auto ptrs = pointers_to(batch);
  return td_loss(net, std::span<const Experience* const>(ptrs));
}

inline LossResult cross_entropy_loss(const QNetwork& net, std::span<const Experience* const> batch) {
  Workspace ws;
  return compute_loss(net, batch, LossKind::CrossEntropy, ws);
}

inline LossResult cross_entropy_loss(const QNetwork& net, std::span<const Experience> batch) {
  const auto ptrs = pointers_to(batch);
  return cross_entropy_loss(net, std::span<const Experience* const>(ptrs));
}

}  // namespace replaylab::nn
