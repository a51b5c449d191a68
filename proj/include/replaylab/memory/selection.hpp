#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "replaylab/core/experience.hpp"
#include "replaylab/core/metric.hpp"
#include "replaylab/memory/ranked_store.hpp"

namespace replaylab {

enum class StrategyKind { Surprise, Reward, Reservoir, Coverage };

inline std::string_view to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Surprise: return "surprise";
    case StrategyKind::Reward: return "reward";
    case StrategyKind::Reservoir: return "reservoir";
    case StrategyKind::Coverage: return "coverage";
  }
  return "?";
}

// Which error the surprise rank measures.
enum class SurpriseTarget {
  Return,   // |ret - Q(s,a)|, matching the training target
  OneStep,  // |r + gamma * max_a' Q(s',a') - Q(s,a)|
};

struct CoverageSettings {
  Metric metric = Metric::L1;
  // Neighborhood radius. Unset: median pairwise feature distance of the
  // first `calibration_size` offered experiences (or of the first
  // `capacity` of them, if the store is smaller).
  std::optional<double> distance;
  std::size_t calibration_size = 200;
};

struct SelectionStrategy {
  StrategyKind kind = StrategyKind::Reservoir;
  CoverageSettings coverage;
  std::uint64_t rng_seed = 0;
  double reward_noise = 1e-6;
  SurpriseTarget surprise_target = SurpriseTarget::Return;
};

/// Maps an experience to the vector coverage distances are measured on.
using FeatureFn = std::function<Vector(const TransitionView&)>;

/// |ret| plus a small uniform jitter so equal returns get distinct keys.
template <class Rng>
double rank_reward(const TransitionView& e, Rng& rng, double noise = 1e-6) {
  std::uniform_real_distribution<double> jitter(0.0, noise);
  return std::abs(e.ret) + (noise > 0.0 ? jitter(rng) : 0.0);
}

/// Standard-normal key. Keeping the largest K keys of a stream of length T
/// retains every element with probability min(1, K/T).
template <class Rng>
double rank_reservoir(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  return normal(rng);
}

/// Number of stored features strictly within `radius` of `feature`,
/// skipping `exclude` (the entry's own slot, when it is stored).
inline std::size_t neighbor_count(const RankedStore& store, std::span<const double> feature, Metric metric,
                                  double radius, std::optional<std::size_t> exclude = std::nullopt) {
  std::size_t count = 0;
  const auto entries = store.entries();
  for (std::size_t j = 0; j < entries.size(); ++j) {
    if (exclude && *exclude == j) continue;
    if (distance(metric, feature, entries[j].feature) < radius) ++count;
  }
  return count;
}

/// Ranks `e` by -(number of stored neighbors) and offers it to the store;
/// when full, the entry with the most neighbors leaves, which may be `e`.
inline std::optional<Experience> coverage_insert(RankedStore& store, Experience e, Vector feature, Metric metric,
                                                 double radius) {
  const double rank = -static_cast<double>(neighbor_count(store, feature, metric, radius));
  return store.insert(std::move(e), rank, std::move(feature));
}

/// Recounts neighbors of the given slots against the current contents.
inline void refresh_coverage(RankedStore& store, std::span<const std::size_t> slots, Metric metric, double radius) {
  std::vector<std::size_t> unique(slots.begin(), slots.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  for (const std::size_t slot : unique) {
    const auto& f = store[slot].feature;
    store.rerank(slot, -static_cast<double>(neighbor_count(store, f, metric, radius, slot)));
  }
}

inline double median_pairwise_distance(std::span<const Vector> features, Metric metric) {
  std::vector<double> d;
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t j = i + 1; j < features.size(); ++j) d.push_back(distance(metric, features[i], features[j]));
  if (d.empty()) return 0.0;
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (d.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(d.begin(), mid);
  return 0.5 * (lower + upper);
}

/// Long-term episodic memory: a RankedStore driven by one selection strategy.
class EpisodicMemory {
 public:
  EpisodicMemory(std::size_t capacity, SelectionStrategy strategy, FeatureFn feature = {})
      : store_(capacity), strategy_(strategy), feature_(std::move(feature)), rng_(strategy.rng_seed) {
    if (strategy_.kind == StrategyKind::Coverage) {
      if (!feature_) throw Error("coverage strategy needs a feature function");
      if (strategy_.coverage.distance) {
        if (!(*strategy_.coverage.distance >= 0.0)) throw Error("coverage distance must be non-negative");
        radius_ = strategy_.coverage.distance;
      }
    }
  }

  /// Offers one experience. Surprise ranks depend on the network and must be
  /// supplied by the caller; every other strategy ranks internally. Returns
  /// what left the store (possibly `e` itself).
  std::optional<Experience> offer(Experience e, std::optional<double> external_rank = std::nullopt) {
    ++offered_;
    const TransitionView view = view_of(e);
    switch (strategy_.kind) {
      case StrategyKind::Surprise:
        if (!external_rank) throw Error("surprise strategy needs a network-derived rank");
        return store_.insert(std::move(e), *external_rank);
      case StrategyKind::Reward: return store_.insert(std::move(e), rank_reward(view, rng_, strategy_.reward_noise));
      case StrategyKind::Reservoir: return store_.insert(std::move(e), rank_reservoir(rng_));
      case StrategyKind::Coverage: return offer_coverage(std::move(e), view);
    }
    return std::nullopt;
  }

  /// Called with the slots drawn for a training batch. Only coverage ranks
  /// move; surprise ranks stay frozen at their insertion values.
  void refresh_on_sample(std::span<const std::size_t> slots) {
    if (strategy_.kind != StrategyKind::Coverage || !radius_) return;
    refresh_coverage(store_, slots, strategy_.coverage.metric, *radius_);
  }

  const RankedStore& store() const { return store_; }
  const SelectionStrategy& strategy() const { return strategy_; }
  std::optional<double> coverage_distance() const { return radius_; }
  std::size_t offered() const { return offered_; }
  std::size_t size() const { return store_.size(); }
  bool empty() const { return store_.empty(); }

 private:
  std::optional<Experience> offer_coverage(Experience e, const TransitionView& view) {
    Vector f = feature_(view);
    if (radius_) return coverage_insert(store_, std::move(e), std::move(f), strategy_.coverage.metric, *radius_);
    // Still calibrating: the store cannot be full yet, so everything is kept
    // and ranked once the radius is known.
    auto evicted = store_.insert(std::move(e), 0.0, std::move(f));
    const std::size_t needed = std::min(strategy_.coverage.calibration_size, store_.capacity());
    if (offered_ >= needed) {
      std::vector<Vector> sample;
      sample.reserve(store_.size());
      for (const auto& entry : store_.entries()) sample.push_back(entry.feature);
      radius_ = median_pairwise_distance(sample, strategy_.coverage.metric);
      std::vector<std::size_t> all(store_.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      refresh_coverage(store_, all, strategy_.coverage.metric, *radius_);
    }
    return evicted;
  }

  RankedStore store_;
  SelectionStrategy strategy_;
  FeatureFn feature_;
  std::mt19937_64 rng_;
  std::optional<double> radius_;
  std::size_t offered_ = 0;
};

}  // namespace replaylab
