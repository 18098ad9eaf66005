#include "svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

namespace forgetlab::svg {

namespace {

constexpr double kPanelW = 420.0;
constexpr double kPanelH = 300.0;
constexpr double kLeft = 62.0;
constexpr double kRight = 130.0;
constexpr double kTop = 30.0;
constexpr double kBottom = 46.0;

std::string num(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    std::string s = buf;
    if (s == "-0.00" || s == "-0.0" || s == "-0") s.erase(0, 1);
    return s;
}

std::string tick_label(double v, double step) {
    if (v != 0.0 && (std::abs(v) >= 1e4 || std::abs(v) < 1e-3)) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1e", v);
        return buf;
    }
    const int digits = step >= 1.0 ? 0 : static_cast<int>(std::ceil(-std::log10(step) - 1e-9));
    return num(v, std::clamp(digits, 0, 6));
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

double nice_step(double span, int target) {
    if (!(span > 0.0)) return 1.0;
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double f = raw / mag;
    const double nice = f < 1.5 ? 1.0 : f < 3.5 ? 2.0 : f < 7.5 ? 5.0 : 10.0;
    return nice * mag;
}

struct Range {
    double lo = 0.0, hi = 1.0, step = 0.2;
};

Range axis_range(double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) return {};
    if (hi - lo < 1e-12) {
        const double pad = std::max(std::abs(lo) * 0.1, 1e-3);
        lo -= pad;
        hi += pad;
    }
    const double step = nice_step(hi - lo, 5);
    return {std::floor(lo / step) * step, std::ceil(hi / step) * step, step};
}

void render_panel(std::string& out, const Panel& p, double ox, double oy) {
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& s : p.series) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    const Range xr = axis_range(xmin, xmax);
    const Range yr = axis_range(ymin, ymax);
    const double pw = kPanelW - kLeft - kRight;
    const double ph = kPanelH - kTop - kBottom;
    const double x0 = ox + kLeft;
    const double y0 = oy + kTop;
    auto sx = [&](double x) { return x0 + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto sy = [&](double y) { return y0 + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

    out += "<g>\n";
    out += "<rect x=\"" + num(x0) + "\" y=\"" + num(y0) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph)
           + "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0;; ++i) {
        const double v = xr.lo + i * xr.step;
        if (v > xr.hi + 1e-9 * xr.step) break;
        const double x = sx(v);
        out += "<line x1=\"" + num(x) + "\" y1=\"" + num(y0 + ph) + "\" x2=\"" + num(x) + "\" y2=\"" + num(y0 + ph + 4)
               + "\" stroke=\"#444\"/>\n";
        out += "<text x=\"" + num(x) + "\" y=\"" + num(y0 + ph + 16) + "\" font-size=\"10\" text-anchor=\"middle\">"
               + tick_label(v, xr.step) + "</text>\n";
    }
    for (int i = 0;; ++i) {
        const double v = yr.lo + i * yr.step;
        if (v > yr.hi + 1e-9 * yr.step) break;
        const double y = sy(v);
        out += "<line x1=\"" + num(x0 - 4) + "\" y1=\"" + num(y) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(y)
               + "\" stroke=\"#444\"/>\n";
        out += "<text x=\"" + num(x0 - 6) + "\" y=\"" + num(y + 3) + "\" font-size=\"10\" text-anchor=\"end\">"
               + tick_label(v, yr.step) + "</text>\n";
    }
    out += "<text x=\"" + num(x0 + pw / 2) + "\" y=\"" + num(oy + kPanelH - 10)
           + "\" font-size=\"12\" text-anchor=\"middle\">" + escape(p.x_label) + "</text>\n";
    out += "<text transform=\"translate(" + num(ox + 14) + "," + num(y0 + ph / 2)
           + ") rotate(-90)\" font-size=\"12\" text-anchor=\"middle\">" + escape(p.y_label) + "</text>\n";
    out += "<text x=\"" + num(x0 + pw / 2) + "\" y=\"" + num(oy + 18)
           + "\" font-size=\"13\" text-anchor=\"middle\">" + escape(p.title) + "</text>\n";

    for (const auto& s : p.series) {
        std::string pts;
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            if (!pts.empty()) pts.push_back(' ');
            pts += num(sx(s.x[i])) + "," + num(sy(s.y[i]));
        }
        if (pts.empty()) continue;
        out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\"";
        if (s.dashed) out += " stroke-dasharray=\"5,3\"";
        out += " points=\"" + pts + "\"/>\n";
        if (s.markers) {
            for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
                if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
                out += "<circle cx=\"" + num(sx(s.x[i])) + "\" cy=\"" + num(sy(s.y[i])) + "\" r=\"3\" fill=\""
                       + s.color + "\"/>\n";
            }
        }
    }

    double ly = y0 + 8;
    const double lx = x0 + pw + 10;
    for (const auto& s : p.series) {
        if (s.label.empty()) continue;
        out += "<line x1=\"" + num(lx) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(lx + 18) + "\" y2=\"" + num(ly)
               + "\" stroke=\"" + s.color + "\" stroke-width=\"2\"";
        if (s.dashed) out += " stroke-dasharray=\"5,3\"";
        out += "/>\n";
        out += "<text x=\"" + num(lx + 22) + "\" y=\"" + num(ly + 3) + "\" font-size=\"10\">" + escape(s.label)
               + "</text>\n";
        ly += 14;
    }
    out += "</g>\n";
}

}  // namespace

std::string render(const std::vector<Panel>& panels, int columns) {
    columns = std::max(1, std::min<int>(columns, static_cast<int>(std::max<std::size_t>(panels.size(), 1))));
    const int rows = static_cast<int>((panels.size() + static_cast<std::size_t>(columns) - 1) / static_cast<std::size_t>(columns));
    const double w = columns * kPanelW;
    const double h = std::max(rows, 1) * kPanelH;
    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w, 0) + "\" height=\"" + num(h, 0)
                      + "\" viewBox=\"0 0 " + num(w, 0) + " " + num(h, 0) + "\" font-family=\"sans-serif\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < panels.size(); ++i) {
        const double ox = static_cast<double>(i % static_cast<std::size_t>(columns)) * kPanelW;
        const double oy = static_cast<double>(i / static_cast<std::size_t>(columns)) * kPanelH;
        render_panel(out, panels[i], ox, oy);
    }
    out += "</svg>\n";
    return out;
}

std::string ramp_color(double t) {
    // Anchors roughly follow the viridis map.
    static constexpr std::array<std::array<double, 3>, 5> anchors{{{68, 1, 84},
                                                                   {59, 82, 139},
                                                                   {33, 145, 140},
                                                                   {94, 201, 98},
                                                                   {253, 231, 37}}};
    if (!std::isfinite(t)) t = 0.0;
    t = std::clamp(t, 0.0, 1.0) * (anchors.size() - 1);
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t), anchors.size() - 2);
    const double f = t - static_cast<double>(i);
    char buf[8];
    int c[3];
    for (int k = 0; k < 3; ++k) {
        c[k] = static_cast<int>(std::lround(anchors[i][static_cast<std::size_t>(k)] * (1 - f)
                                            + anchors[i + 1][static_cast<std::size_t>(k)] * f));
    }
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
    return buf;
}

std::string palette_color(std::size_t i) {
    static constexpr std::array<const char*, 8> colors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                       "#9467bd", "#8c564b", "#e377c2", "#17becf"};
    return colors[i % colors.size()];
}

}  // namespace forgetlab::svg
