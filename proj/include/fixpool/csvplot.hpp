#pragma once

#include "fixpool/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace fixpool {

// Generic numeric table with a fixed header, every cell rendered %.17g so
// identical runs emit identical bytes.
inline void write_table_csv(const std::string& path,
                            const std::vector<std::string>& columns,
                            const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("write_table_csv: cannot open " + path);
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c) out << ',';
    out << columns[c];
  }
  out << '\n';
  for (const auto& row : rows) {
    if (row.size() != columns.size())
      throw DimensionError("write_table_csv: row width != header width");
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      out << format_g17(row[c]);
    }
    out << '\n';
  }
  if (!out.good()) throw IoError("write_table_csv: write failed for " + path);
}

struct PlotSeries {
  std::string name;
  std::string color;  // any CSS color; the trajectory plots use blue/red/green
  std::vector<double> ys;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return std::string(buf);
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return std::string(buf);
}

}  // namespace detail

// Minimal self-contained SVG line plot: axes, ticks, one polyline per series,
// and a text legend. Non-finite samples are skipped.
inline void svg_line_plot(const std::string& path, const std::string& title,
                          const std::string& x_label, const std::string& y_label,
                          const std::vector<double>& xs,
                          const std::vector<PlotSeries>& series) {
  if (series.empty()) throw DimensionError("svg_line_plot: no series");
  for (const auto& s : series)
    if (s.ys.size() != xs.size())
      throw DimensionError("svg_line_plot: series length != x length");

  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  bool any = false;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i])) continue;
    for (const auto& s : series) {
      if (!std::isfinite(s.ys[i])) continue;
      if (!any) {
        x_min = x_max = xs[i];
        y_min = y_max = s.ys[i];
        any = true;
      } else {
        x_min = std::min(x_min, xs[i]);
        x_max = std::max(x_max, xs[i]);
        y_min = std::min(y_min, s.ys[i]);
        y_max = std::max(y_max, s.ys[i]);
      }
    }
  }
  if (!any) throw DimensionError("svg_line_plot: no finite data");
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) y_max = y_min + 1.0;

  const double width = 640, height = 420;
  const double ml = 70, mr = 20, mt = 40, mb = 50;  // margins
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto sx = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
  auto sy = [&](double y) { return mt + ph - (y - y_min) / (y_max - y_min) * ph; };

  std::ofstream out(path);
  if (!out) throw IoError("svg_line_plot: cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << ' ' << height
      << "\">\n";
  out << "<rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">"
      << detail::xml_escape(title) << "</text>\n";

  // axes
  out << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
      << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << mt + ph << "\" stroke=\"black\"/>\n";
  const int n_ticks = 5;
  for (int t = 0; t <= n_ticks; ++t) {
    const double fx = x_min + (x_max - x_min) * t / n_ticks;
    const double fy = y_min + (y_max - y_min) * t / n_ticks;
    out << "<line x1=\"" << detail::svg_num(sx(fx)) << "\" y1=\"" << mt + ph
        << "\" x2=\"" << detail::svg_num(sx(fx)) << "\" y2=\"" << mt + ph + 5
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << detail::svg_num(sx(fx)) << "\" y=\"" << mt + ph + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << detail::xml_escape(detail::tick_label(fx)) << "</text>\n";
    out << "<line x1=\"" << ml - 5 << "\" y1=\"" << detail::svg_num(sy(fy))
        << "\" x2=\"" << ml << "\" y2=\"" << detail::svg_num(sy(fy))
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << detail::svg_num(sy(fy) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << detail::xml_escape(detail::tick_label(fy)) << "</text>\n";
  }
  out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << detail::xml_escape(x_label) << "</text>\n";
  out << "<text x=\"18\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 18 "
      << mt + ph / 2 << ")\">" << detail::xml_escape(y_label) << "</text>\n";

  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << detail::xml_escape(s.color)
        << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!std::isfinite(xs[i]) || !std::isfinite(s.ys[i])) continue;
      if (!first) out << ' ';
      out << detail::svg_num(sx(xs[i])) << ',' << detail::svg_num(sy(s.ys[i]));
      first = false;
    }
    out << "\"/>\n";
  }

  double legend_y = mt + 14;
  for (const auto& s : series) {
    out << "<line x1=\"" << ml + pw - 150 << "\" y1=\"" << detail::svg_num(legend_y - 4)
        << "\" x2=\"" << ml + pw - 125 << "\" y2=\"" << detail::svg_num(legend_y - 4)
        << "\" stroke=\"" << detail::xml_escape(s.color) << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << ml + pw - 118 << "\" y=\"" << detail::svg_num(legend_y)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << detail::xml_escape(s.name)
        << "</text>\n";
    legend_y += 16;
  }
  out << "</svg>\n";
  if (!out.good()) throw IoError("svg_line_plot: write failed for " + path);
}

}  // namespace fixpool
