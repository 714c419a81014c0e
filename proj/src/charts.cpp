#include "capsrep/charts.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace capsrep::chart {

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 690.0;
constexpr double kTop = 50.0;
constexpr double kBottom = 390.0;

const char* kPalette[] = {"#2563eb", "#dc2626", "#059669", "#d97706",
                          "#7c3aed", "#0891b2"};
constexpr int kPaletteSize = 6;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return std::string(buf);
}

std::string escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
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

// Position within [lo, hi] mapped onto the pixel span; a degenerate range
// parks everything mid-span so constant series stay visible.
double project(double v, double lo, double hi, double px_lo, double px_hi) {
  if (hi == lo) return 0.5 * (px_lo + px_hi);
  return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo);
}

}  // namespace

std::string line_chart_svg(const ChartSpec& spec) {
  if (spec.series.empty()) {
    throw ParamError("chart needs at least one series");
  }
  double x_min = std::numeric_limits<double>::infinity();
  double x_max = -x_min, y_min = x_min, y_max = -x_min;
  for (const Series& s : spec.series) {
    if (s.x.empty()) {
      throw ParamError("chart series \"" + s.label + "\" is empty");
    }
    if (s.x.size() != s.y.size()) {
      throw ParamError("chart series \"" + s.label + "\" has " +
                       std::to_string(s.x.size()) + " x values but " +
                       std::to_string(s.y.size()) + " y values");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        throw ParamError("chart series \"" + s.label +
                         "\" contains a non-finite value");
      }
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      y_min = std::min(y_min, s.y[i]);
      y_max = std::max(y_max, s.y[i]);
    }
  }

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(kWidth)
      << "\" height=\"" << fmt(kHeight) << "\" viewBox=\"0 0 " << fmt(kWidth)
      << " " << fmt(kHeight) << "\">\n";
  svg << "<rect width=\"" << fmt(kWidth) << "\" height=\"" << fmt(kHeight)
      << "\" fill=\"#ffffff\"/>\n";
  svg << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"28\" font-family=\"sans-serif\""
      << " font-size=\"16\" text-anchor=\"middle\">" << escape(spec.title)
      << "</text>\n";

  // Axes with the data extrema as the end tick labels.
  svg << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kBottom)
      << "\" x2=\"" << fmt(kRight) << "\" y2=\"" << fmt(kBottom)
      << "\" stroke=\"#000000\"/>\n";
  svg << "<line x1=\"" << fmt(kLeft) << "\" y1=\"" << fmt(kTop) << "\" x2=\""
      << fmt(kLeft) << "\" y2=\"" << fmt(kBottom)
      << "\" stroke=\"#000000\"/>\n";
  svg << "<text x=\"" << fmt(kLeft) << "\" y=\"" << fmt(kBottom + 20)
      << "\" font-family=\"sans-serif\" font-size=\"12\""
      << " text-anchor=\"middle\">" << fmt(x_min) << "</text>\n";
  svg << "<text x=\"" << fmt(kRight) << "\" y=\"" << fmt(kBottom + 20)
      << "\" font-family=\"sans-serif\" font-size=\"12\""
      << " text-anchor=\"middle\">" << fmt(x_max) << "</text>\n";
  svg << "<text x=\"" << fmt(kLeft - 8) << "\" y=\"" << fmt(kBottom + 4)
      << "\" font-family=\"sans-serif\" font-size=\"12\""
      << " text-anchor=\"end\">" << fmt(y_min) << "</text>\n";
  svg << "<text x=\"" << fmt(kLeft - 8) << "\" y=\"" << fmt(kTop + 4)
      << "\" font-family=\"sans-serif\" font-size=\"12\""
      << " text-anchor=\"end\">" << fmt(y_max) << "</text>\n";
  svg << "<text x=\"" << fmt((kLeft + kRight) / 2) << "\" y=\""
      << fmt(kBottom + 40) << "\" font-family=\"sans-serif\" font-size=\"13\""
      << " text-anchor=\"middle\">" << escape(spec.x_label) << "</text>\n";
  svg << "<text x=\"18\" y=\"" << fmt((kTop + kBottom) / 2)
      << "\" font-family=\"sans-serif\" font-size=\"13\""
      << " text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << fmt((kTop + kBottom) / 2) << ")\">" << escape(spec.y_label)
      << "</text>\n";

  for (std::size_t si = 0; si < spec.series.size(); ++si) {
    const Series& s = spec.series[si];
    const char* colour = kPalette[si % kPaletteSize];
    svg << "<polyline fill=\"none\" stroke=\"" << colour
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i > 0) svg << " ";
      svg << fmt(project(s.x[i], x_min, x_max, kLeft, kRight)) << ","
          << fmt(project(s.y[i], y_min, y_max, kBottom, kTop));
    }
    svg << "\"/>\n";
  }

  if (spec.series.size() > 1) {
    for (std::size_t si = 0; si < spec.series.size(); ++si) {
      const double y = kTop + 16.0 * static_cast<double>(si);
      svg << "<rect x=\"" << fmt(kRight - 150) << "\" y=\"" << fmt(y - 9)
          << "\" width=\"10\" height=\"10\" fill=\""
          << kPalette[si % kPaletteSize] << "\"/>\n";
      svg << "<text x=\"" << fmt(kRight - 135) << "\" y=\"" << fmt(y)
          << "\" font-family=\"sans-serif\" font-size=\"12\">"
          << escape(spec.series[si].label) << "</text>\n";
    }
  }

  svg << "</svg>\n";
  return svg.str();
}

}  // namespace capsrep::chart
