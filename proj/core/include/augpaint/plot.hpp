#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace augpaint {

// Minimal line-chart renderer writing an 8-bit RGB PNG: axes, tick labels
// (5x7 bitmap digits), one polyline per series with markers.
struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

void write_line_plot(const std::filesystem::path& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series, int width = 640,
                     int height = 480);

}  // namespace augpaint
