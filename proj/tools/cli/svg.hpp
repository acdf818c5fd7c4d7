#pragma once

#include <string>
#include <utility>
#include <vector>

namespace dsam::cli {

struct Series {
  std::string name;
  std::string color;  ///< any SVG colour
  std::vector<std::pair<double, double>> points;
};

/// Static line chart. Axis ranges cover every point; an empty or flat range is
/// widened to unit length. Coordinates print with three decimals.
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series);

}  // namespace dsam::cli
