#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "replaylab/core/experience.hpp"

namespace replaylab {

/// Bounded long-term memory ordered by a rank key. The entry with the lowest
/// rank is always the next to go; among equal ranks the most recently
/// inserted entry goes first, so earlier arrivals win ties.
///
/// Entries live in fixed slots. A slot is only ever reused by the experience
/// that replaces its occupant, so slot indices and references stay valid
/// across re-ranking and are stable enough for batch sampling.
class RankedStore {
 public:
  struct Entry {
    Experience experience;
    double rank = 0.0;
    std::uint64_t order = 0;  // insertion sequence number
    Vector feature;           // cached coverage feature, empty otherwise
  };

  explicit RankedStore(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw Error("episodic capacity must be positive");
    entries_.reserve(capacity_);
  }

  /// Inserts `e` with `rank` if there is room or if it outranks the current
  /// minimum. Returns whatever left the store: the evicted minimum, or `e`
  /// itself when it was rejected.
  std::optional<Experience> insert(Experience e, double rank, Vector feature = {}) {
    if (std::isnan(rank)) throw Error("rank is NaN");
    if (!std::isfinite(rank)) throw Error("rank must be finite");
    const std::uint64_t order = next_order_++;
    if (entries_.size() < capacity_) {
      const std::size_t slot = entries_.size();
      entries_.push_back(Entry{std::move(e), rank, order, std::move(feature)});
      index_.insert(Key{rank, order, slot});
      return std::nullopt;
    }
    const Key lowest = *index_.begin();
    if (!(rank > lowest.rank)) return e;
    index_.erase(index_.begin());
    Entry& victim = entries_[lowest.slot];
    std::optional<Experience> evicted = std::move(victim.experience);
    victim = Entry{std::move(e), rank, order, std::move(feature)};
    index_.insert(Key{rank, order, lowest.slot});
    return evicted;
  }

  /// Replaces the rank of the entry in `slot`, keeping its insertion order.
  void rerank(std::size_t slot, double rank) {
    if (!std::isfinite(rank)) throw Error("rank must be finite");
    Entry& entry = entries_.at(slot);
    index_.erase(Key{entry.rank, entry.order, slot});
    entry.rank = rank;
    index_.insert(Key{rank, entry.order, slot});
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  bool full() const { return entries_.size() == capacity_; }

  const Entry& operator[](std::size_t slot) const { return entries_[slot]; }
  std::span<const Entry> entries() const { return entries_; }

  /// Slot of the next eviction candidate. Store must be non-empty.
  std::size_t min_slot() const { return index_.begin()->slot; }
  double min_rank() const { return index_.begin()->rank; }

  /// Slots from most to least preferred.
  std::vector<std::size_t> slots_by_preference() const {
    std::vector<std::size_t> out;
    out.reserve(index_.size());
    for (auto it = index_.rbegin(); it != index_.rend(); ++it) out.push_back(it->slot);
    return out;
  }

 private:
  struct Key {
    double rank;
    std::uint64_t order;
    std::size_t slot;
  };
  struct KeyLess {
    bool operator()(const Key& a, const Key& b) const {
      if (a.rank != b.rank) return a.rank < b.rank;
      return a.order > b.order;  // later insertion is "smaller": evicted first
    }
  };

  std::size_t capacity_;
  std::uint64_t next_order_ = 0;
  std::vector<Entry> entries_;
  std::set<Key, KeyLess> index_;
};

/// Per-task count of stored experiences.
inline std::map<TaskId, std::size_t> composition_report(const RankedStore& store) {
  std::map<TaskId, std::size_t> counts;
  for (const auto& entry : store.entries()) ++counts[entry.experience.task_id];
  return counts;
}

}  // namespace replaylab
