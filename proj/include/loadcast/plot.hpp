#pragma once

#include "loadcast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace loadcast {

struct PlotSeries {
    std::string label;
    std::vector<double> values;
};

namespace detail {

/// Smallest "round" number (1, 2, 2.5, 5 times a power of ten) >= x.
inline double nice_ceiling(double x) {
    if (!(x > 0)) return 1.0;
    const double p = std::pow(10.0, std::floor(std::log10(x)));
    for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
        if (m * p >= x) return m * p;
    }
    return 10.0 * p;
}

inline std::string fmt(double v, int decimals = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace detail

/// Upper bound of the y axis used by `daily_mape_svg`.
inline double plot_y_max(const std::vector<PlotSeries>& series) {
    double hi = 0.0;
    for (const auto& s : series) {
        for (double v : s.values) hi = std::max(hi, v);
    }
    return detail::nice_ceiling(hi);
}

/// Self-contained SVG line chart: one polyline per series, day index on x,
/// MAPE (%) on y, legend in the top-right corner.
inline std::string daily_mape_svg(const std::vector<PlotSeries>& series, const std::string& title) {
    if (series.empty()) throw ConfigError("nothing to plot: no model series given");
    std::size_t n = 0;
    for (const auto& s : series) {
        if (s.values.empty()) throw ConfigError("series '" + s.label + "' has no values");
        for (double v : s.values) {
            if (!std::isfinite(v)) throw ConfigError("series '" + s.label + "' has a non-finite value");
        }
        n = std::max(n, s.values.size());
    }

    constexpr double W = 800, H = 420, left = 60, right = 20, top = 40, bottom = 50;
    const double pw = W - left - right;
    const double ph = H - top - bottom;
    const double y_max = plot_y_max(series);
    const double x_span = n > 1 ? static_cast<double>(n - 1) : 1.0;
    const auto px = [&](std::size_t i) { return left + pw * static_cast<double>(i) / x_span; };
    const auto py = [&](double v) { return top + ph * (1.0 - v / y_max); };

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(W, 0) + "\" height=\"" +
           detail::fmt(H, 0) + "\" viewBox=\"0 0 " + detail::fmt(W, 0) + " " + detail::fmt(H, 0) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + detail::fmt(W / 2, 0) + "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"16\">" + detail::xml_escape(title) + "</text>\n";

    svg += "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
    svg += "<line x1=\"" + detail::fmt(left) + "\" y1=\"" + detail::fmt(top + ph) + "\" x2=\"" + detail::fmt(left + pw) +
           "\" y2=\"" + detail::fmt(top + ph) + "\"/>\n";
    svg += "<line x1=\"" + detail::fmt(left) + "\" y1=\"" + detail::fmt(top) + "\" x2=\"" + detail::fmt(left) +
           "\" y2=\"" + detail::fmt(top + ph) + "\"/>\n";
    svg += "</g>\n";

    svg += "<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (int k = 0; k <= 5; ++k) {
        const double v = y_max * k / 5.0;
        svg += "<text x=\"" + detail::fmt(left - 6) + "\" y=\"" + detail::fmt(py(v) + 4) +
               "\" text-anchor=\"end\">" + detail::fmt(v, 1) + "</text>\n";
        svg += "<line x1=\"" + detail::fmt(left) + "\" y1=\"" + detail::fmt(py(v)) + "\" x2=\"" +
               detail::fmt(left + pw) + "\" y2=\"" + detail::fmt(py(v)) + "\" stroke=\"#dddddd\"/>\n";
    }
    const std::size_t step = n > 10 ? 10 : 1;
    for (std::size_t i = 0; i < n; i += step) {
        svg += "<text x=\"" + detail::fmt(px(i)) + "\" y=\"" + detail::fmt(top + ph + 16) +
               "\" text-anchor=\"middle\">" + std::to_string(i + 1) + "</text>\n";
    }
    svg += "</g>\n";
    svg += "<text x=\"" + detail::fmt(left + pw / 2) + "\" y=\"" + detail::fmt(H - 10) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">Day</text>\n";
    svg += "<text x=\"16\" y=\"" + detail::fmt(top + ph / 2) + "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\" transform=\"rotate(-90 16 " + detail::fmt(top + ph / 2) + ")\">MAPE (%)</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = palette[k % std::size(palette)];
        svg += "<polyline class=\"series\" data-label=\"" + detail::xml_escape(series[k].label) +
               "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[k].values.size(); ++i) {
            svg += (i ? " " : "") + detail::fmt(px(i)) + "," + detail::fmt(py(series[k].values[i]));
        }
        svg += "\"/>\n";
    }

    svg += "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const double y = top + 10 + 16.0 * static_cast<double>(k);
        const double x = left + pw - 150;
        svg += "<line x1=\"" + detail::fmt(x) + "\" y1=\"" + detail::fmt(y) + "\" x2=\"" + detail::fmt(x + 20) +
               "\" y2=\"" + detail::fmt(y) + "\" stroke=\"" + palette[k % std::size(palette)] +
               "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + detail::fmt(x + 26) + "\" y=\"" + detail::fmt(y + 4) + "\">" +
               detail::xml_escape(series[k].label) + "</text>\n";
    }
    svg += "</g>\n</svg>\n";
    return svg;
}

} // namespace loadcast
