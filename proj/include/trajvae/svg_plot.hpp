#pragma once

#include <string>
#include <vector>

namespace trajvae {

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal SVG line chart (axes, ticks, legend). Deterministic output.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series);

}  // namespace trajvae
