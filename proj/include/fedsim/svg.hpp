#pragma once

#include <string>
#include <vector>

namespace fedsim::svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal line chart: axes, ticks, one polyline per series, legend.
// Coordinates are printed with fixed precision so output is byte-stable.
std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<Series>& series,
                       double y_min = 0.0, double y_max = 1.0);

std::string bar_chart(const std::string& title, const std::vector<std::string>& labels,
                      const std::vector<double>& values);

void write_file(const std::string& path, const std::string& content);

}  // namespace fedsim::svg
