#pragma once

#include <cstddef>
#include <deque>
#include <limits>
#include <optional>

#include "replaylab/core/experience.hpp"

namespace replaylab {

/// Short-term replay memory. Holds the most recent `capacity` experiences
/// and evicts the oldest on overflow.
class FifoBuffer {
 public:
  static constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

  explicit FifoBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw Error("fifo capacity must be positive");
  }

  std::optional<Experience> insert(Experience e) {
    std::optional<Experience> evicted;
    if (entries_.size() == capacity_) {
      evicted = std::move(entries_.front());
      entries_.pop_front();
    }
    entries_.push_back(std::move(e));
    return evicted;
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  bool full() const { return entries_.size() == capacity_; }
  bool unbounded() const { return capacity_ == kUnbounded; }

  // Index 0 is the oldest entry.
  const Experience& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::size_t capacity_;
  std::deque<Experience> entries_;
};

}  // namespace replaylab
