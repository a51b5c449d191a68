#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "replaylab/agent/lifelong.hpp"
#include "replaylab/core/error.hpp"

namespace replaylab::harness {

/// Formats a value with 6 significant digits, the precision of every CSV.
inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::vector<std::string> metrics_header(std::size_t num_tasks) {
  std::vector<std::string> h{"global_step", "training_task"};
  for (std::size_t t = 0; t < num_tasks; ++t) h.push_back("success_task_" + std::to_string(t));
  for (std::size_t t = 0; t < num_tasks; ++t) h.push_back("return_task_" + std::to_string(t));
  h.push_back("max_td_error");
  h.push_back("loss_ma");
  return h;
}

inline std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
  return out;
}

/// One row per record. Columns are indexed by task id, so `num_tasks` must
/// cover every task that was evaluated.
inline void write_metrics_csv(std::ostream& os, const std::vector<EvalRecord>& records, std::size_t num_tasks) {
  os << join(metrics_header(num_tasks)) << '\n';
  for (const auto& r : records) {
    if (r.per_task_success.size() != num_tasks || r.per_task_mean_return.size() != num_tasks)
      throw Error("record does not cover every task");
    std::vector<std::string> row{std::to_string(r.global_step), std::to_string(r.training_task)};
    for (const double s : r.per_task_success) row.push_back(fmt6(s));
    for (const double v : r.per_task_mean_return) row.push_back(fmt6(v));
    row.push_back(fmt6(r.max_td_error_seen));
    row.push_back(fmt6(r.loss_ma));
    os << join(row) << '\n';
  }
}

/// A numeric CSV: header names and rows of values.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw Error("missing column '" + name + "'");
  }
  bool has_column(const std::string& name) const {
    for (const auto& c : columns)
      if (c == name) return true;
    return false;
  }
  std::vector<double> values(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline Table read_table(std::istream& is, const std::string& source = "csv") {
  Table t;
  std::string line;
  if (!std::getline(is, line) || line.empty()) throw Error(source + ": missing header");
  if (line.back() == '\r') line.pop_back();
  t.columns = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != t.columns.size())
      throw Error(source + ": line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                  " cells, expected " + std::to_string(t.columns.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(c, &used));
        if (used != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw Error(source + ": line " + std::to_string(lineno) + ": not a number '" + c + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_table(in, path.string());
}

/// Number of tasks in a metrics or aggregate table, from its success columns.
inline std::size_t task_columns(const Table& t) {
  std::size_t n = 0;
  while (t.has_column("success_task_" + std::to_string(n)) || t.has_column("success_task_" + std::to_string(n) + "_mean"))
    ++n;
  return n;
}

inline std::vector<EvalRecord> records_from_table(const Table& t) {
  const std::size_t n = task_columns(t);
  if (t.columns != metrics_header(n)) throw Error("not a metrics table");
  std::vector<EvalRecord> out;
  for (const auto& row : t.rows) {
    EvalRecord r;
    r.global_step = static_cast<std::uint64_t>(row[0]);
    r.training_task = static_cast<TaskId>(row[1]);
    r.per_task_success.assign(row.begin() + 2, row.begin() + 2 + static_cast<std::ptrdiff_t>(n));
    r.per_task_mean_return.assign(row.begin() + 2 + static_cast<std::ptrdiff_t>(n),
                                  row.begin() + 2 + 2 * static_cast<std::ptrdiff_t>(n));
    r.max_td_error_seen = row[2 + 2 * n];
    r.loss_ma = row[3 + 2 * n];
    out.push_back(std::move(r));
  }
  return out;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (const double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (const double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return out;
}

/// Mean and standard deviation across seeds, row by row. Every table must
/// share the metrics schema and the same sequence of global steps.
inline Table aggregate_tables(const std::vector<Table>& seeds) {
  if (seeds.empty()) throw Error("nothing to aggregate");
  const Table& first = seeds.front();
  for (const auto& t : seeds) {
    if (t.columns != first.columns) throw Error("schema mismatch between seeds");
    if (t.rows.size() != first.rows.size()) throw Error("seeds have different numbers of records");
    for (std::size_t i = 0; i < t.rows.size(); ++i)
      if (t.rows[i][0] != first.rows[i][0] || t.rows[i][1] != first.rows[i][1])
        throw Error("seeds disagree on global_step or training_task at row " + std::to_string(i));
  }
  Table out;
  out.columns = {"global_step", "training_task"};
  for (std::size_t c = 2; c < first.columns.size(); ++c) {
    out.columns.push_back(first.columns[c] + "_mean");
    out.columns.push_back(first.columns[c] + "_std");
  }
  for (std::size_t i = 0; i < first.rows.size(); ++i) {
    std::vector<double> row{first.rows[i][0], first.rows[i][1]};
    for (std::size_t c = 2; c < first.columns.size(); ++c) {
      std::vector<double> xs;
      for (const auto& t : seeds) xs.push_back(t.rows[i][c]);
      const MeanStd ms = mean_std(xs);
      row.push_back(ms.mean);
      row.push_back(ms.std);
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline void write_table(std::ostream& os, const Table& t) {
  os << join(t.columns) << '\n';
  for (const auto& row : t.rows) {
    std::vector<std::string> cells;
    for (std::size_t c = 0; c < row.size(); ++c)
      cells.push_back(c < 2 ? std::to_string(static_cast<long long>(row[c])) : fmt6(row[c]));
    os << join(cells) << '\n';
  }
}

/// Retention per task: final success over the peak success seen while that
/// task was being trained. A task with no positive peak (never trained, or
/// never solved) scores 1, since there was nothing to forget.
inline std::map<TaskId, double> forgetting_score(const std::vector<EvalRecord>& records) {
  std::map<TaskId, double> out;
  if (records.empty()) return out;
  const std::size_t n = records.back().per_task_success.size();
  for (TaskId k = 0; k < n; ++k) {
    double peak = 0.0;
    for (const auto& r : records)
      if (r.training_task == k) peak = std::max(peak, r.per_task_success[k]);
    const double final_success = records.back().per_task_success[k];
    out[k] = peak > 0.0 ? std::min(1.0, final_success / peak) : 1.0;
  }
  return out;
}

inline double final_mean_success(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw Error("no records");
  const auto& s = records.back().per_task_success;
  double sum = 0.0;
  for (const double x : s) sum += x;
  return s.empty() ? 0.0 : sum / static_cast<double>(s.size());
}

}  // namespace replaylab::harness
