#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

namespace reluflow {

/// Minimal line-plot writer: one polyline per series, optional log10 y-axis.
/// Meant for quick looks at loss profiles, not publication plots.
struct SvgSeries {
  std::string name;
  std::vector<double> x, y;
};

inline std::string render_line_svg(const std::vector<SvgSeries>& series,
                                   bool log_y = false, int width = 720,
                                   int height = 440) {
  const int ml = 60, mr = 16, mt = 20, mb = 36;  // margins
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  auto ty = [&](double v) {
    return log_y ? std::log10(std::max(v, 1e-300)) : v;
  };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(ty(s.y[i]))) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, ty(s.y[i]));
      ymax = std::max(ymax, ty(s.y[i]));
    }
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr);
  };
  auto py = [&](double y) {
    return height - mb - (ty(y) - ymin) / (ymax - ymin) * (height - mt - mb);
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b"};
  std::ostringstream out;
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='"
      << height << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<rect x='" << ml << "' y='" << mt << "' width='" << (width - ml - mr)
      << "' height='" << (height - mt - mb)
      << "' fill='none' stroke='#888' stroke-width='1'/>\n";
  char buf[256];
  // axis end labels
  std::snprintf(buf, sizeof buf,
                "<text x='%d' y='%d' font-size='11' fill='#444'>%.4g</text>\n", ml,
                height - mb + 14, xmin);
  out << buf;
  std::snprintf(buf, sizeof buf,
                "<text x='%d' y='%d' font-size='11' fill='#444' text-anchor='end'>"
                "%.4g</text>\n",
                width - mr, height - mb + 14, xmax);
  out << buf;
  std::snprintf(
      buf, sizeof buf,
      "<text x='%d' y='%d' font-size='11' fill='#444' text-anchor='end'>%s%.4g"
      "</text>\n",
      ml - 4, height - mb, log_y ? "1e" : "", ymin);
  out << buf;
  std::snprintf(
      buf, sizeof buf,
      "<text x='%d' y='%d' font-size='11' fill='#444' text-anchor='end'>%s%.4g"
      "</text>\n",
      ml - 4, mt + 10, log_y ? "1e" : "", ymax);
  out << buf;

  int ci = 0;
  int legend_y = mt + 14;
  for (const auto& s : series) {
    const char* color = colors[ci % 6];
    out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.3' points='";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(ty(s.y[i]))) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(s.x[i]), py(s.y[i]));
      out << buf;
    }
    out << "'/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x='%d' y='%d' font-size='12' fill='%s'>%s</text>\n", ml + 8,
                  legend_y, color, s.name.c_str());
    out << buf;
    legend_y += 15;
    ++ci;
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace reluflow
