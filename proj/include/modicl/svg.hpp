#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace modicl {

/// Minimal SVG emitters for run artifacts. Every figure the CLI writes also
/// gets a CSV twin, so these only need to be serviceable.
namespace svg {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::string color = "#1f77b4";
};

inline std::string line_chart(const std::vector<Series>& series, const std::string& title,
                              const std::string& x_label, const std::string& y_label,
                              bool log_x = false) {
    const double W = 640, H = 420, L = 60, R = 20, Tm = 40, B = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const Series& s : series) {
        for (size_t i = 0; i < s.x.size(); ++i) {
            const double xv = log_x ? std::log10(std::max(s.x[i], 1e-12)) : s.x[i];
            xmin = std::min(xmin, xv);
            xmax = std::max(xmax, xv);
            if (std::isfinite(s.y[i])) {
                ymin = std::min(ymin, s.y[i]);
                ymax = std::max(ymax, s.y[i]);
            }
        }
    }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;
    auto px = [&](double x) {
        const double xv = log_x ? std::log10(std::max(x, 1e-12)) : x;
        return L + (xv - xmin) / (xmax - xmin) * (W - L - R);
    };
    auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - Tm - B); };

    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='15'>" << title
       << "</text>\n";
    os << "<text x='" << W / 2 << "' y='" << H - 10 << "' text-anchor='middle' font-size='12'>"
       << x_label << "</text>\n";
    os << "<text x='14' y='" << H / 2 << "' text-anchor='middle' font-size='12' transform='rotate(-90 14 "
       << H / 2 << ")'>" << y_label << "</text>\n";
    os << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R << "' y2='" << H - B
       << "' stroke='black'/>\n";
    os << "<line x1='" << L << "' y1='" << Tm << "' x2='" << L << "' y2='" << H - B
       << "' stroke='black'/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double yv = ymin + (ymax - ymin) * i / 4.0;
        os << "<text x='" << L - 6 << "' y='" << py(yv) + 4 << "' text-anchor='end' font-size='10'>"
           << static_cast<int>(yv * 1000) / 1000.0 << "</text>\n";
        const double xv = xmin + (xmax - xmin) * i / 4.0;
        const double xd = log_x ? std::pow(10.0, xv) : xv;
        os << "<text x='" << L + (W - L - R) * i / 4.0 << "' y='" << H - B + 16
           << "' text-anchor='middle' font-size='10'>" << static_cast<int>(xd * 100) / 100.0
           << "</text>\n";
    }
    double legend_y = Tm + 6;
    for (const Series& s : series) {
        os << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.5' points='";
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            os << px(s.x[i]) << "," << py(s.y[i]) << " ";
        }
        os << "'/>\n";
        os << "<text x='" << W - R - 4 << "' y='" << legend_y << "' text-anchor='end' font-size='11' fill='"
           << s.color << "'>" << s.label << "</text>\n";
        legend_y += 14;
    }
    os << "</svg>\n";
    return os.str();
}

/// viridis-ish three-stop gradient, v in [0,1]
inline std::string heat_color(double v) {
    v = std::clamp(v, 0.0, 1.0);
    int r, g, b;
    if (v < 0.5) {
        const double t = v * 2;
        r = static_cast<int>(68 + t * (33 - 68));
        g = static_cast<int>(1 + t * (144 - 1));
        b = static_cast<int>(84 + t * (140 - 84));
    } else {
        const double t = (v - 0.5) * 2;
        r = static_cast<int>(33 + t * (253 - 33));
        g = static_cast<int>(144 + t * (231 - 144));
        b = static_cast<int>(140 + t * (37 - 140));
    }
    std::ostringstream os;
    os << "rgb(" << r << "," << g << "," << b << ")";
    return os.str();
}

inline std::string heatmap(const std::vector<double>& values, int64_t rows, int64_t cols,
                           const std::string& title, double vmin, double vmax) {
    const double cell = std::max(2.0, std::min(16.0, 560.0 / std::max(rows, cols)));
    const double W = cols * cell + 80, H = rows * cell + 60;
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << W / 2 << "' y='18' text-anchor='middle' font-size='13'>" << title
       << "</text>\n";
    const double span = vmax > vmin ? vmax - vmin : 1.0;
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < cols; ++c) {
            const double v = (values[static_cast<size_t>(r * cols + c)] - vmin) / span;
            os << "<rect x='" << 40 + c * cell << "' y='" << 30 + r * cell << "' width='" << cell
               << "' height='" << cell << "' fill='" << heat_color(v) << "'/>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

struct ScatterPoint {
    double x, y;
    std::string label;
    std::string color = "#1f77b4";
};

inline std::string scatter(const std::vector<ScatterPoint>& points, const std::string& title,
                           const std::string& x_label, const std::string& y_label) {
    const double W = 560, H = 560, L = 55, R = 20, Tm = 40, B = 45;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& p : points) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    const double padx = 0.06 * (xmax - xmin), pady = 0.06 * (ymax - ymin);
    xmin -= padx;
    xmax += padx;
    ymin -= pady;
    ymax += pady;
    auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - Tm - B); };
    std::ostringstream os;
    os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
    os << "<rect width='100%' height='100%' fill='white'/>\n";
    os << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
       << "</text>\n";
    os << "<text x='" << W / 2 << "' y='" << H - 8 << "' text-anchor='middle' font-size='12'>"
       << x_label << "</text>\n";
    os << "<text x='14' y='" << H / 2 << "' text-anchor='middle' font-size='12' transform='rotate(-90 14 "
       << H / 2 << ")'>" << y_label << "</text>\n";
    for (const auto& p : points) {
        os << "<circle cx='" << px(p.x) << "' cy='" << py(p.y) << "' r='3.2' fill='" << p.color
           << "' fill-opacity='0.75'/>\n";
        if (!p.label.empty()) {
            os << "<text x='" << px(p.x) + 4 << "' y='" << py(p.y) - 3 << "' font-size='8'>"
               << p.label << "</text>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace svg
} // namespace modicl
