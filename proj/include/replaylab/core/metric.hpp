#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "replaylab/core/error.hpp"

namespace replaylab {

enum class Metric { L1, L2, Cosine, ExtendedJaccard };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::L1: return "l1";
    case Metric::L2: return "l2";
    case Metric::Cosine: return "cosine";
    case Metric::ExtendedJaccard: return "jaccard";
  }
  return "?";
}

inline Metric parse_metric(std::string_view s) {
  if (s == "l1") return Metric::L1;
  if (s == "l2") return Metric::L2;
  if (s == "cosine") return Metric::Cosine;
  if (s == "jaccard" || s == "extended-jaccard") return Metric::ExtendedJaccard;
  throw Error("unknown metric '" + std::string(s) + "'");
}

inline double distance(Metric metric, std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("distance: length mismatch");
  const auto n = static_cast<Eigen::Index>(x.size());
  const Eigen::Map<const Eigen::VectorXd> a(x.data(), n);
  const Eigen::Map<const Eigen::VectorXd> b(y.data(), n);
  switch (metric) {
    case Metric::L1: return (a - b).cwiseAbs().sum();
    case Metric::L2: return (a - b).norm();
    case Metric::Cosine:
    case Metric::ExtendedJaccard: {
      const double xy = a.dot(b);
      const double xx = a.squaredNorm();
      const double yy = b.squaredNorm();
      if (metric == Metric::Cosine) {
        if (xx == 0.0 || yy == 0.0) throw Error("undefined similarity");
        if (std::equal(x.begin(), x.end(), y.begin())) return 0.0;
        const double sim = xy / (std::sqrt(xx) * std::sqrt(yy));
        return std::max(0.0, 1.0 - sim);
      }
      const double denom = xx + yy - xy;
      if (denom == 0.0) throw Error("undefined similarity");
      return std::max(0.0, 1.0 - xy / denom);
    }
  }
  return 0.0;
}

}  // namespace replaylab
