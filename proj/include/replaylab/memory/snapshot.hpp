#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "replaylab/memory/fifo_buffer.hpp"
#include "replaylab/memory/selection.hpp"

namespace replaylab {

inline constexpr const char* kBufferFormat = "replaylab.buffer";

struct SnapshotRecord {
  Experience experience;
  std::optional<double> rank;  // absent for FIFO contents

  friend bool operator==(const SnapshotRecord&, const SnapshotRecord&) = default;
};

// Point-in-time copy of one buffer. Records of a ranked store are listed
// from most to least preferred; FIFO records from oldest to newest.
struct BufferSnapshot {
  std::string kind;      // "episodic" or "fifo"
  std::string strategy;  // selection strategy name, "fifo" for FIFO buffers
  std::size_t capacity = 0;
  std::vector<SnapshotRecord> records;

  friend bool operator==(const BufferSnapshot&, const BufferSnapshot&) = default;
};

inline BufferSnapshot snapshot_of(const EpisodicMemory& memory) {
  BufferSnapshot snap{"episodic", std::string(to_string(memory.strategy().kind)), memory.store().capacity(), {}};
  for (const std::size_t slot : memory.store().slots_by_preference()) {
    const auto& entry = memory.store()[slot];
    snap.records.push_back({entry.experience, entry.rank});
  }
  return snap;
}

inline BufferSnapshot snapshot_of(const FifoBuffer& fifo) {
  BufferSnapshot snap{"fifo", "fifo", fifo.unbounded() ? 0 : fifo.capacity(), {}};
  for (const auto& e : fifo) snap.records.push_back({e, std::nullopt});
  return snap;
}

inline std::map<TaskId, std::size_t> composition_report(const BufferSnapshot& snap) {
  std::map<TaskId, std::size_t> counts;
  for (const auto& r : snap.records) ++counts[r.experience.task_id];
  return counts;
}

inline nlohmann::json record_to_json(const SnapshotRecord& r) {
  const Experience& e = r.experience;
  nlohmann::json j;
  j["task_id"] = e.task_id;
  j["step_index"] = e.step_index;
  if (r.rank) j["rank"] = *r.rank;
  j["reward"] = e.reward;
  j["ret"] = e.ret;
  j["action"] = e.action;
  j["terminal"] = e.terminal;
  j["state"] = e.state;
  j["next_state"] = e.next_state;
  return j;
}

/// One JSON document; the header fields on the first line and then one
/// record per line. Doubles are printed with round-trip precision.
inline void write_snapshot(const BufferSnapshot& snap, std::ostream& os) {
  nlohmann::json header;
  header["format"] = kBufferFormat;
  header["version"] = 1;
  header["kind"] = snap.kind;
  header["strategy"] = snap.strategy;
  header["capacity"] = snap.capacity;
  header["size"] = snap.records.size();
  std::string head = header.dump();
  head.pop_back();  // reopen the object to append the record array
  os << head << ",\"records\":[\n";
  for (std::size_t i = 0; i < snap.records.size(); ++i) {
    os << record_to_json(snap.records[i]).dump();
    os << (i + 1 < snap.records.size() ? ",\n" : "\n");
  }
  os << "]}\n";
}

inline BufferSnapshot read_snapshot(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed buffer snapshot: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kBufferFormat) throw Error("not a buffer snapshot");
  try {
    BufferSnapshot snap;
    snap.kind = j.at("kind").get<std::string>();
    snap.strategy = j.at("strategy").get<std::string>();
    snap.capacity = j.at("capacity").get<std::size_t>();
    for (const auto& r : j.at("records")) {
      SnapshotRecord rec;
      Experience& e = rec.experience;
      e.task_id = r.at("task_id").get<TaskId>();
      e.step_index = r.at("step_index").get<std::uint64_t>();
      if (r.contains("rank")) rec.rank = r.at("rank").get<double>();
      e.reward = r.at("reward").get<double>();
      e.ret = r.at("ret").get<double>();
      e.action = r.at("action").get<std::size_t>();
      e.terminal = r.value("terminal", false);
      e.state = r.at("state").get<Vector>();
      e.next_state = r.value("next_state", Vector{});
      snap.records.push_back(std::move(rec));
    }
    if (snap.records.size() != j.value("size", snap.records.size()))
      throw Error("buffer snapshot record count does not match its header");
    return snap;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed buffer snapshot: ") + e.what());
  }
}

inline void write_snapshot(const BufferSnapshot& snap, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  write_snapshot(snap, os);
}

inline BufferSnapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  return read_snapshot(is);
}

}  // namespace replaylab
