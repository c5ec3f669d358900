#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rvf {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line chart with axes, ticks and a legend. Non-finite points are skipped.
/// Bounds default to the data range when min == max.
std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                          std::span<const PlotSeries> series, double x_min = 0.0, double x_max = 0.0,
                          double y_min = 0.0, double y_max = 0.0);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace rvf
