// svg.hpp - static charts: confusion heatmap, accuracy curve, layer x bit heatmap
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace trustbench::cli {

/// counts[true][predicted]; cells are shaded by row-normalised share and
/// carry data-row, data-col and data-count attributes.
std::string confusion_svg(const std::vector<std::vector<std::uint64_t>>& counts, const std::vector<std::string>& labels,
                          const std::string& title);

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Accuracy (0..1) against SNR in dB, one polyline per series.
std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label);

/// values[row][col] in 0..1; NaN marks an empty cell (drawn hatched grey).
std::string heatmap_svg(const std::vector<std::vector<double>>& values, const std::vector<std::string>& rows,
                        const std::vector<std::string>& cols, const std::string& title, const std::string& legend);

} // namespace trustbench::cli
