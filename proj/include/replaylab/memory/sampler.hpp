#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "replaylab/memory/fifo_buffer.hpp"
#include "replaylab/memory/selection.hpp"

namespace replaylab {

// How a training minibatch is split between the two buffers.
struct BatchSpec {
  std::size_t total = 60;
  std::size_t from_fifo = 30;
  std::size_t from_episodic = 30;

  void validate() const {
    if (total == 0) throw Error("memory.batch_total must be positive");
    if (from_fifo + from_episodic != total)
      throw Error("memory.batch_total must equal memory.batch_fifo + memory.batch_episodic");
  }
};

struct SampledBatch {
  std::vector<const Experience*> experiences;  // FIFO draws first
  std::vector<std::size_t> episodic_slots;
  std::size_t from_fifo = 0;
  std::size_t from_episodic = 0;
};

/// Uniform draws with replacement from each buffer. A buffer that is empty
/// (or absent) hands its share to the other so the batch is always full.
/// Episodic draws trigger the strategy's refresh-on-sample hook. The
/// returned pointers stay valid until the next insertion into either buffer.
template <class Rng>
SampledBatch sample_batch(const FifoBuffer& fifo, EpisodicMemory* episodic, const BatchSpec& spec, Rng& rng) {
  spec.validate();
  const bool fifo_ok = !fifo.empty();
  const bool epi_ok = episodic != nullptr && !episodic->empty();
  if (!fifo_ok && !epi_ok) throw Error("no experiences");
  SampledBatch batch;
  batch.from_fifo = spec.from_fifo;
  batch.from_episodic = spec.from_episodic;
  if (!epi_ok) {
    batch.from_fifo = spec.total;
    batch.from_episodic = 0;
  } else if (!fifo_ok) {
    batch.from_fifo = 0;
    batch.from_episodic = spec.total;
  }
  batch.experiences.reserve(spec.total);
  if (batch.from_fifo > 0) {
    std::uniform_int_distribution<std::size_t> pick(0, fifo.size() - 1);
    for (std::size_t i = 0; i < batch.from_fifo; ++i) batch.experiences.push_back(&fifo[pick(rng)]);
  }
  if (batch.from_episodic > 0) {
    const RankedStore& store = episodic->store();
    std::uniform_int_distribution<std::size_t> pick(0, store.size() - 1);
    batch.episodic_slots.reserve(batch.from_episodic);
    for (std::size_t i = 0; i < batch.from_episodic; ++i) batch.episodic_slots.push_back(pick(rng));
    episodic->refresh_on_sample(batch.episodic_slots);
    for (const std::size_t slot : batch.episodic_slots) batch.experiences.push_back(&store[slot].experience);
  }
  return batch;
}

}  // namespace replaylab
