#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "replaylab/harness/metrics.hpp"

namespace replaylab::harness {

struct PlotOptions {
  std::string title = "Success rate";
  bool smooth = false;  // trailing moving average over 5 records
  int width = 800;
  int height = 420;
};

/// Success curves of one experiment, ready to draw.
struct CurveSet {
  std::vector<double> steps;
  std::vector<TaskId> training_task;
  std::vector<std::vector<double>> mean;  // [task][row]
  std::vector<std::vector<double>> spread;  // [task][row]; empty without envelopes
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::vector<double> moving_average(const std::vector<double>& xs, std::size_t window) {
  std::vector<double> out(xs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sum += xs[i];
    if (i >= window) sum -= xs[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

inline constexpr std::array<const char*, 6> kLineColors{"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                                        "#8c564b"};
inline constexpr std::array<const char*, 6> kBandColors{"#dbe8f5", "#f7dada", "#dcf0dc", "#e9e1f2", "#fde8d2",
                                                        "#eee3df"};

}  // namespace detail

/// Builds curves from metrics CSVs (several seeds are averaged, with a
/// one-standard-deviation envelope) or from one aggregate CSV.
inline CurveSet curves_from_tables(const std::vector<Table>& tables) {
  if (tables.empty()) throw Error("no input tables");
  for (const auto& t : tables)
    if (t.rows.empty()) throw Error("no data rows");
  const bool aggregate = tables.front().has_column("success_task_0_mean");
  if (aggregate && tables.size() != 1) throw Error("schema mismatch: pass one aggregate table or only metrics tables");
  for (const auto& t : tables)
    if (t.columns != tables.front().columns) throw Error("schema mismatch between input tables");

  const Table source = aggregate ? tables.front() : (tables.size() == 1 ? tables.front() : aggregate_tables(tables));
  const bool summarized = aggregate || tables.size() > 1;
  CurveSet c;
  c.steps = source.values("global_step");
  for (const double t : source.values("training_task")) c.training_task.push_back(static_cast<TaskId>(t));
  const std::size_t n = task_columns(source);
  if (n == 0) throw Error("schema mismatch: no success columns");
  for (std::size_t k = 0; k < n; ++k) {
    const std::string base = "success_task_" + std::to_string(k);
    if (summarized) {
      c.mean.push_back(source.values(base + "_mean"));
      c.spread.push_back(source.values(base + "_std"));
    } else {
      c.mean.push_back(source.values(base));
    }
  }
  return c;
}

/// Renders an SVG line chart: one line per task, background bands for the
/// task being trained, optional envelopes, and a legend.
inline std::string plot_curves(const CurveSet& in, const PlotOptions& opt = {}) {
  if (in.steps.empty()) throw Error("no data rows");
  CurveSet c = in;
  if (opt.smooth) {
    for (auto& m : c.mean) m = detail::moving_average(m, 5);
    for (auto& s : c.spread) s = detail::moving_average(s, 5);
  }
  const double left = 60, right = 150, top = 40, bottom = 50;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  const double x0 = 0.0, x1 = std::max(1.0, c.steps.back());
  const auto X = [&](double s) { return left + pw * (s - x0) / (x1 - x0); };
  const auto Y = [&](double v) { return top + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opt.width) + "\" height=\"" +
         std::to_string(opt.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(opt.width) + "\" height=\"" + std::to_string(opt.height) +
         "\" fill=\"white\"/>\n";

  // Training-task bands: each record covers the interval since the previous one.
  std::size_t start = 0;
  for (std::size_t i = 1; i <= c.steps.size(); ++i) {
    if (i < c.steps.size() && c.training_task[i] == c.training_task[start]) continue;
    const double a = start == 0 ? x0 : c.steps[start - 1];
    const double b = c.steps[i - 1];
    const auto color = detail::kBandColors[c.training_task[start] % detail::kBandColors.size()];
    svg += "<rect class=\"band\" x=\"" + detail::num(X(a)) + "\" y=\"" + detail::num(top) + "\" width=\"" +
           detail::num(std::max(0.0, X(b) - X(a))) + "\" height=\"" + detail::num(ph) + "\" fill=\"" + color +
           "\"/>\n";
    start = i;
  }

  // Axes and gridlines.
  for (int k = 0; k <= 4; ++k) {
    const double v = k / 4.0;
    svg += "<line x1=\"" + detail::num(left) + "\" y1=\"" + detail::num(Y(v)) + "\" x2=\"" + detail::num(left + pw) +
           "\" y2=\"" + detail::num(Y(v)) + "\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n";
    svg += "<text x=\"" + detail::num(left - 8) + "\" y=\"" + detail::num(Y(v) + 4) + "\" text-anchor=\"end\">" +
           detail::num(v) + "</text>\n";
  }
  for (int k = 0; k <= 5; ++k) {
    const double s = x0 + (x1 - x0) * k / 5.0;
    char label[32];
    std::snprintf(label, sizeof label, "%.0f", s);
    svg += "<text x=\"" + detail::num(X(s)) + "\" y=\"" + detail::num(top + ph + 18) +
           "\" text-anchor=\"middle\">" + label + "</text>\n";
  }
  svg += "<rect x=\"" + detail::num(left) + "\" y=\"" + detail::num(top) + "\" width=\"" + detail::num(pw) +
         "\" height=\"" + detail::num(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + detail::num(left + pw / 2) + "\" y=\"" + detail::num(opt.height - 12.0) +
         "\" text-anchor=\"middle\">global step</text>\n";
  svg += "<text transform=\"translate(16," + detail::num(top + ph / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">success rate</text>\n";
  const std::string title = opt.title + (opt.smooth ? " (moving average, 5 records)" : "");
  svg += "<text x=\"" + detail::num(left + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
         detail::xml_escape(title) + "</text>\n";

  for (std::size_t k = 0; k < c.mean.size(); ++k) {
    const auto color = detail::kLineColors[k % detail::kLineColors.size()];
    if (!c.spread.empty()) {
      std::string pts;
      for (std::size_t i = 0; i < c.steps.size(); ++i)
        pts += detail::num(X(c.steps[i])) + "," + detail::num(Y(c.mean[k][i] + c.spread[k][i])) + " ";
      for (std::size_t i = c.steps.size(); i-- > 0;)
        pts += detail::num(X(c.steps[i])) + "," + detail::num(Y(c.mean[k][i] - c.spread[k][i])) + " ";
      svg += "<polygon class=\"envelope\" points=\"" + pts + "\" fill=\"" + color +
             "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
    }
    std::string pts;
    for (std::size_t i = 0; i < c.steps.size(); ++i)
      pts += detail::num(X(c.steps[i])) + "," + detail::num(Y(c.mean[k][i])) + " ";
    svg += "<polyline class=\"task-line\" points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.8\"/>\n";
  }

  // Legend.
  const double lx = left + pw + 16;
  double ly = top + 8;
  for (std::size_t k = 0; k < c.mean.size(); ++k, ly += 20) {
    const auto color = detail::kLineColors[k % detail::kLineColors.size()];
    svg += "<line x1=\"" + detail::num(lx) + "\" y1=\"" + detail::num(ly) + "\" x2=\"" + detail::num(lx + 22) +
           "\" y2=\"" + detail::num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + detail::num(lx + 28) + "\" y=\"" + detail::num(ly + 4) + "\">task " + std::to_string(k) +
           "</text>\n";
  }
  ly += 8;
  svg += "<text x=\"" + detail::num(lx) + "\" y=\"" + detail::num(ly) + "\">shading: task in training</text>\n";
  svg += "</svg>\n";
  return svg;
}

inline std::string plot_curves(const std::vector<Table>& tables, const PlotOptions& opt = {}) {
  return plot_curves(curves_from_tables(tables), opt);
}

}  // namespace replaylab::harness
