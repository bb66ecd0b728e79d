#pragma once

// Minimal static SVG charts for experiment artifacts.

#include <string>
#include <vector>

namespace divelab::svg {

struct BarSeries {
  std::string name;
  std::vector<double> values;  ///< one per group
};

/// Grouped bars: one cluster per group label, one bar per series.
std::string grouped_bar_chart(const std::string& title, const std::string& y_label,
                              const std::vector<std::string>& groups,
                              const std::vector<BarSeries>& series);

struct LineSeries {
  std::string name;
  std::vector<double> mean;
  std::vector<double> spread;  ///< error-bar half height; empty for none
};

/// Lines over shared x positions with optional error bars.
std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<double>& x,
                       const std::vector<LineSeries>& series);

}  // namespace divelab::svg
