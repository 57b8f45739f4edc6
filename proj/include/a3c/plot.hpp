#pragma once

// Plain SVG line charts for metrics and speedup CSVs. Output depends only on
// the input table, so identical CSVs give identical files.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "a3c/csv.hpp"
#include "a3c/errors.hpp"

namespace a3c {

struct Series {
  std::string label;
  std::string color;
  std::vector<double> x, y;
  bool dashed = false;
};

struct Panel {
  std::string title, xlabel, ylabel;
  std::vector<Series> series;
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

inline void draw_panel(std::ostream& o, const Panel& p, double ox, double oy, double w, double h) {
  const double l = ox + 70, r = ox + w - 20, t = oy + 30, b = oy + h - 45;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : p.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) {
    const double pad = ymin == 0 ? 1 : std::abs(ymin) * 1e-6;
    ymin -= pad;
    ymax += pad;
  }
  auto X = [&](double v) { return l + (v - xmin) / (xmax - xmin) * (r - l); };
  auto Y = [&](double v) { return b - (v - ymin) / (ymax - ymin) * (b - t); };

  o << "<text x=\"" << svg_num((l + r) / 2) << "\" y=\"" << svg_num(oy + 18)
    << "\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(p.title) << "</text>\n";
  o << "<rect x=\"" << svg_num(l) << "\" y=\"" << svg_num(t) << "\" width=\"" << svg_num(r - l) << "\" height=\""
    << svg_num(b - t) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0, fy = ymin + (ymax - ymin) * i / 4.0;
    o << "<text x=\"" << svg_num(X(fx)) << "\" y=\"" << svg_num(b + 15)
      << "\" text-anchor=\"middle\" font-size=\"10\">" << tick_label(fx) << "</text>\n";
    o << "<text x=\"" << svg_num(l - 5) << "\" y=\"" << svg_num(Y(fy) + 3)
      << "\" text-anchor=\"end\" font-size=\"10\">" << tick_label(fy) << "</text>\n";
  }
  o << "<text x=\"" << svg_num((l + r) / 2) << "\" y=\"" << svg_num(b + 35)
    << "\" text-anchor=\"middle\" font-size=\"12\">" << xml_escape(p.xlabel) << "</text>\n";
  o << "<text x=\"" << svg_num(ox + 14) << "\" y=\"" << svg_num((t + b) / 2)
    << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 " << svg_num(ox + 14) << ' '
    << svg_num((t + b) / 2) << ")\">" << xml_escape(p.ylabel) << "</text>\n";

  double ly = t + 12;
  for (const auto& s : p.series) {
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!pts.empty()) pts += ' ';
      pts += svg_num(X(s.x[i])) + "," + svg_num(Y(s.y[i]));
    }
    if (!pts.empty())
      o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\""
        << (s.dashed ? " stroke-dasharray=\"5,4\"" : "") << " points=\"" << pts << "\"/>\n";
    o << "<text x=\"" << svg_num(r - 8) << "\" y=\"" << svg_num(ly) << "\" text-anchor=\"end\" font-size=\"11\" fill=\""
      << s.color << "\">" << xml_escape(s.label) << "</text>\n";
    ly += 14;
  }
}

inline std::vector<double> numeric_column(const CsvTable& t, const std::string& name) {
  const std::size_t c = t.column(name);
  std::vector<double> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows)
    out.push_back(r[c].empty() ? std::numeric_limits<double>::quiet_NaN() : parse_double(r[c]));
  return out;
}

}  // namespace detail

/// Panels stacked vertically, each 640x300.
inline std::string render_svg(const std::vector<Panel>& panels) {
  const double w = 640, h = 300;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h * panels.size()
    << "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) detail::draw_panel(o, panels[i], 0, h * i, w, h);
  o << "</svg>\n";
  return o.str();
}

/// Running-average test reward and critic gap against samples.
inline std::vector<Panel> metrics_panels(const CsvTable& t) {
  const auto x = detail::numeric_column(t, "samples");
  Panel reward{"Test reward", "samples", "J", {}};
  reward.series.push_back({"running average", "#1f77b4", x, detail::numeric_column(t, "running_avg_test_reward")});
  reward.series.push_back({"current", "#aec7e8", x, detail::numeric_column(t, "objective"), true});
  Panel gap{"Critic gap", "samples", "|omega - omega*|", {}};
  gap.series.push_back({"running average", "#d62728", x, detail::numeric_column(t, "running_avg_critic_gap")});
  gap.series.push_back({"current", "#ff9896", x, detail::numeric_column(t, "critic_gap"), true});
  return {reward, gap};
}

/// Measured speedup against N with the ideal line y = N.
inline std::vector<Panel> speedup_panels(const CsvTable& t) {
  const auto n = detail::numeric_column(t, "n_workers");
  Panel p{"Speedup", "workers", "speedup", {}};
  p.series.push_back({"measured", "#1f77b4", n, detail::numeric_column(t, "speedup")});
  p.series.push_back({"ideal", "#7f7f7f", n, n, true});
  return {p};
}

/// Picks the layout from the CSV header.
inline std::string plot_csv(const CsvTable& t) {
  const auto has = [&t](const std::string& c) {
    return std::find(t.header.begin(), t.header.end(), c) != t.header.end();
  };
  if (has("speedup")) return render_svg(speedup_panels(t));
  if (has("running_avg_test_reward")) return render_svg(metrics_panels(t));
  throw ConfigError("CSV is neither a metrics nor a speedup table");
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out << text;
  if (!out.flush()) throw IoError(path, "write failed");
}

}  // namespace a3c
