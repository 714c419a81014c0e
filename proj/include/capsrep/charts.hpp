#pragma once

#include <string>
#include <vector>

#include "capsrep/errors.hpp"

namespace capsrep::chart {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;  // same length as x
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

// Plain-text SVG line chart. The plot rectangle maps exactly onto
// [min(x), max(x)] x [min(y), max(y)] over all series, with the extrema
// printed as the end tick labels; every sample becomes one polyline vertex.
// All numbers are printed with %.6g, so a fixed spec yields fixed bytes.
// Throws ParamError on empty specs, length mismatches, or non-finite data.
std::string line_chart_svg(const ChartSpec& spec);

}  // namespace capsrep::chart
