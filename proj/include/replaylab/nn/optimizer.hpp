#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "replaylab/nn/network.hpp"

namespace replaylab::nn {

enum class OptimizerKind { RMSProp, SGD };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::RMSProp;
  double learning_rate = 2.5e-4;
  double decay = 0.95;     // RMSProp rho
  double epsilon = 1e-6;   // RMSProp denominator guard

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error("optimizer.learning_rate must be positive");
    if (kind == OptimizerKind::RMSProp) {
      if (!(decay > 0.0 && decay < 1.0)) throw Error("optimizer.decay must be in (0,1)");
      if (!(epsilon > 0.0)) throw Error("optimizer.epsilon must be positive");
    }
  }
};

inline std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::SGD ? "sgd" : "rmsprop"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "rmsprop") return OptimizerKind::RMSProp;
  if (s == "sgd") return OptimizerKind::SGD;
  throw Error("unknown optimizer '" + std::string(s) + "'");
}

// RMSProp: acc <- rho*acc + (1-rho)*g^2;  theta <- theta - lr*g/sqrt(acc+eps)
// SGD:     theta <- theta - lr*g
inline void optimizer_step(QNetwork& net, const ParamVector& gradient, const OptimizerConfig& cfg) {
  if (static_cast<std::size_t>(gradient.size()) != net.parameter_count())
    throw Error("gradient length does not match parameter count");
  auto& theta = net.parameters();
  if (cfg.kind == OptimizerKind::SGD) {
    theta.noalias() -= cfg.learning_rate * gradient;
    return;
  }
  auto& acc = net.optimizer_state();
  acc = cfg.decay * acc + (1.0 - cfg.decay) * gradient.cwiseAbs2();
  theta.array() -= cfg.learning_rate * gradient.array() / (acc.array() + cfg.epsilon).sqrt();
}

}  // namespace replaylab::nn
