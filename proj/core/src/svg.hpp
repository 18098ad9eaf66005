#pragma once

// Minimal line-chart SVG writer used by the plot emitters. Output is a pure
// function of the input, so identical records give byte-identical files.

#include <string>
#include <vector>

namespace forgetlab::svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
    bool dashed = false;
    bool markers = false;
};

struct Panel {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
};

/// Panels laid out left to right, `columns` per row.
std::string render(const std::vector<Panel>& panels, int columns = 2);

/// Colour for a value in [0, 1] along a dark-purple to yellow ramp.
std::string ramp_color(double t);

/// Fixed categorical palette, cycling.
std::string palette_color(std::size_t i);

}  // namespace forgetlab::svg
