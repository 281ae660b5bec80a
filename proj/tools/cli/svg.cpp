#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "trustbench/error.hpp"

namespace trustbench::cli {

namespace {

// Fixed-precision text keeps the output byte-stable across platforms.
std::string fx(double v, int digits = 1) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string escape(const std::string& s) {
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

// White to dark blue.
std::string shade(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(247 + (8 - 247) * t));
    const int g = static_cast<int>(std::lround(251 + (48 - 251) * t));
    const int b = static_cast<int>(std::lround(255 + (107 - 255) * t));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

const char* ink(double t) { return t > 0.55 ? "#ffffff" : "#1a1a1a"; }

void open_svg(std::ostringstream& os, int w, int h, const std::string& title) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
       << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"#ffffff\"/>\n";
    os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
       << "</text>\n";
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

} // namespace

std::string confusion_svg(const std::vector<std::vector<std::uint64_t>>& counts, const std::vector<std::string>& labels,
                          const std::string& title) {
    const int n = static_cast<int>(labels.size());
    if (n == 0) throw Error(ErrorCode::ValidationError, "confusion matrix is empty");
    if (static_cast<int>(counts.size()) != n)
        throw Error(ErrorCode::ValidationError, "confusion matrix does not match its labels");
    const int cell = 56, left = 90, top = 60;
    const int w = left + n * cell + 30, h = top + n * cell + 60;
    std::ostringstream os;
    open_svg(os, w, h, title);
    for (int r = 0; r < n; ++r) {
        if (static_cast<int>(counts[r].size()) != n)
            throw Error(ErrorCode::ValidationError, "confusion matrix row " + std::to_string(r) + " is ragged");
        std::uint64_t row_total = 0;
        for (auto c : counts[r]) row_total += c;
        for (int c = 0; c < n; ++c) {
            const double share = row_total ? static_cast<double>(counts[r][c]) / row_total : 0.0;
            const int x = left + c * cell, y = top + r * cell;
            os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
               << "\" fill=\"" << shade(share) << "\" stroke=\"#cccccc\" data-row=\"" << r << "\" data-col=\"" << c
               << "\" data-count=\"" << counts[r][c] << "\"/>\n";
            if (counts[r][c])
                os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\" fill=\""
                   << ink(share) << "\">" << fx(100.0 * share) << "</text>\n";
        }
        os << "<text x=\"" << left - 6 << "\" y=\"" << top + r * cell + cell / 2 + 4 << "\" text-anchor=\"end\">"
           << escape(labels[r]) << "</text>\n";
    }
    for (int c = 0; c < n; ++c)
        os << "<text x=\"" << left + c * cell + cell / 2 << "\" y=\"" << top + n * cell + 18
           << "\" text-anchor=\"middle\">" << escape(labels[c]) << "</text>\n";
    os << "<text x=\"" << left + n * cell / 2 << "\" y=\"" << h - 14 << "\" text-anchor=\"middle\">predicted</text>\n";
    os << "<text x=\"16\" y=\"" << top + n * cell / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << top + n * cell / 2 << ")\">true</text>\n";
    os << "</svg>\n";
    return os.str();
}

std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label) {
    double x0 = INFINITY, x1 = -INFINITY;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size() || s.x.empty())
            throw Error(ErrorCode::ValidationError, "series '" + s.name + "' is empty or ragged");
        for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    }
    if (series.empty()) throw Error(ErrorCode::ValidationError, "no series to plot");
    if (x1 == x0) x0 -= 1, x1 += 1;
    const int w = 640, h = 420, left = 64, right = 150, top = 40, bottom = 56;
    const double pw = w - left - right, ph = h - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (1.0 - std::clamp(y, 0.0, 1.0)) * ph; };

    std::ostringstream os;
    open_svg(os, w, h, title);
    for (int k = 0; k <= 10; ++k) {
        const double y = py(k / 10.0);
        os << "<line x1=\"" << left << "\" y1=\"" << fx(y) << "\" x2=\"" << left + pw << "\" y2=\"" << fx(y)
           << "\" stroke=\"#e5e5e5\"/>\n";
        os << "<text x=\"" << left - 6 << "\" y=\"" << fx(y + 4) << "\" text-anchor=\"end\">" << fx(k / 10.0)
           << "</text>\n";
    }
    const int ticks = 8;
    for (int k = 0; k <= ticks; ++k) {
        const double v = x0 + (x1 - x0) * k / ticks;
        os << "<text x=\"" << fx(px(v)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << fx(v)
           << "</text>\n";
    }
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << fx(pw) << "\" height=\"" << fx(ph)
       << "\" fill=\"none\" stroke=\"#333333\"/>\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& s = series[i];
        const char* color = kPalette[i % std::size(kPalette)];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t k = 0; k < s.x.size(); ++k) os << (k ? " " : "") << fx(px(s.x[k]), 2) << ',' << fx(py(s.y[k]), 2);
        os << "\"/>\n";
        for (std::size_t k = 0; k < s.x.size(); ++k)
            os << "<circle cx=\"" << fx(px(s.x[k]), 2) << "\" cy=\"" << fx(py(s.y[k]), 2) << "\" r=\"3\" fill=\""
               << color << "\"/>\n";
        const int ly = top + 16 + 20 * static_cast<int>(i);
        os << "<line x1=\"" << w - right + 14 << "\" y1=\"" << ly << "\" x2=\"" << w - right + 38 << "\" y2=\"" << ly
           << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << w - right + 44 << "\" y=\"" << ly + 4 << "\">" << escape(s.name) << "</text>\n";
    }
    os << "<text x=\"" << fx(left + pw / 2) << "\" y=\"" << h - 14 << "\" text-anchor=\"middle\">" << escape(x_label)
       << "</text>\n";
    os << "<text x=\"16\" y=\"" << fx(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << fx(top + ph / 2) << ")\">" << escape(y_label) << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

std::string heatmap_svg(const std::vector<std::vector<double>>& values, const std::vector<std::string>& rows,
                        const std::vector<std::string>& cols, const std::string& title, const std::string& legend) {
    if (values.size() != rows.size()) throw Error(ErrorCode::ValidationError, "heatmap rows do not match their labels");
    const int cw = 22, ch = 26, left = 70, top = 50;
    const int nc = static_cast<int>(cols.size()), nr = static_cast<int>(rows.size());
    const int w = left + nc * cw + 90, h = top + nr * ch + 60;
    std::ostringstream os;
    open_svg(os, w, h, title);
    os << "<defs><pattern id=\"empty\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\">"
          "<path d=\"M0 6L6 0\" stroke=\"#bbbbbb\"/></pattern></defs>\n";
    for (int r = 0; r < nr; ++r) {
        if (static_cast<int>(values[r].size()) != nc)
            throw Error(ErrorCode::ValidationError, "heatmap row " + std::to_string(r) + " is ragged");
        for (int c = 0; c < nc; ++c) {
            const double v = values[r][c];
            const int x = left + c * cw, y = top + r * ch;
            os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cw << "\" height=\"" << ch << "\" fill=\""
               << (std::isnan(v) ? std::string("url(#empty)") : shade(v)) << "\" stroke=\"#ffffff\" data-row=\"" << r
               << "\" data-col=\"" << c << "\" data-value=\"" << (std::isnan(v) ? std::string("none") : fx(v, 4))
               << "\"/>\n";
        }
        os << "<text x=\"" << left - 6 << "\" y=\"" << top + r * ch + ch / 2 + 4 << "\" text-anchor=\"end\">"
           << escape(rows[r]) << "</text>\n";
    }
    for (int c = 0; c < nc; ++c)
        os << "<text x=\"" << left + c * cw + cw / 2 << "\" y=\"" << top + nr * ch + 16
           << "\" text-anchor=\"middle\" font-size=\"10\">" << escape(cols[c]) << "</text>\n";
    // colour scale
    const int sx = left + nc * cw + 24;
    for (int k = 0; k < 10; ++k)
        os << "<rect x=\"" << sx << "\" y=\"" << top + (9 - k) * 12 << "\" width=\"16\" height=\"12\" fill=\""
           << shade((k + 0.5) / 10) << "\"/>\n";
    os << "<text x=\"" << sx + 20 << "\" y=\"" << top + 10 << "\" font-size=\"10\">1.0</text>\n";
    os << "<text x=\"" << sx + 20 << "\" y=\"" << top + 120 << "\" font-size=\"10\">0.0</text>\n";
    os << "<text x=\"" << left + nc * cw / 2 << "\" y=\"" << h - 14 << "\" text-anchor=\"middle\">" << escape(legend)
       << "</text>\n";
    os << "</svg>\n";
    return os.str();
}

} // namespace trustbench::cli
