#include "fedsim/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "fedsim/error.hpp"

namespace fedsim::svg {

namespace {

constexpr double kWidth = 640.0, kHeight = 420.0;
constexpr double kLeft = 60.0, kRight = 20.0, kTop = 36.0, kBottom = 48.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<Series>& series,
                       double y_min, double y_max) {
    double x_min = 0.0, x_max = 1.0;
    bool have_x = false;
    for (const Series& s : series) {
        for (double x : s.x) {
            if (!have_x) {
                x_min = x_max = x;
                have_x = true;
            }
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
        }
    }
    if (x_max <= x_min) x_max = x_min + 1.0;
    if (y_max <= y_min) y_max = y_min + 1.0;

    const double pw = kWidth - kLeft - kRight;
    const double ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * pw; };
    auto py = [&](double y) { return kTop + ph - (y - y_min) / (y_max - y_min) * ph; };

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" +
           fmt(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
           title + "</text>\n";

    // frame + ticks
    out += "<rect x=\"" + fmt(kLeft) + "\" y=\"" + fmt(kTop) + "\" width=\"" + fmt(pw) +
           "\" height=\"" + fmt(ph) + "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        double fy = y_min + (y_max - y_min) * i / 5.0;
        double yy = py(fy);
        out += "<line x1=\"" + fmt(kLeft - 4) + "\" y1=\"" + fmt(yy) + "\" x2=\"" + fmt(kLeft) +
               "\" y2=\"" + fmt(yy) + "\" stroke=\"#333\"/>\n";
        out += "<text x=\"" + fmt(kLeft - 8) + "\" y=\"" + fmt(yy + 4) +
               "\" text-anchor=\"end\">" + fmt_tick(fy) + "</text>\n";
        double fx = x_min + (x_max - x_min) * i / 5.0;
        double xx = px(fx);
        out += "<line x1=\"" + fmt(xx) + "\" y1=\"" + fmt(kTop + ph) + "\" x2=\"" + fmt(xx) +
               "\" y2=\"" + fmt(kTop + ph + 4) + "\" stroke=\"#333\"/>\n";
        out += "<text x=\"" + fmt(xx) + "\" y=\"" + fmt(kTop + ph + 18) +
               "\" text-anchor=\"middle\">" + fmt_tick(fx) + "</text>\n";
    }
    out += "<text x=\"" + fmt(kLeft + pw / 2) + "\" y=\"" + fmt(kHeight - 10) +
           "\" text-anchor=\"middle\">" + x_label + "</text>\n";
    out += "<text x=\"16\" y=\"" + fmt(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
           fmt(kTop + ph / 2) + ")\">" + y_label + "</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        const char* color = kPalette[si % (sizeof kPalette / sizeof kPalette[0])];
        out += "<polyline fill=\"none\" stroke=\"";
        out += color;
        out += "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            out += fmt(px(s.x[i])) + "," + fmt(py(std::clamp(s.y[i], y_min, y_max))) + " ";
        }
        out += "\"/>\n";
        double ly = kTop + 14.0 + 16.0 * static_cast<double>(si);
        out += "<line x1=\"" + fmt(kLeft + pw - 130) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" +
               fmt(kLeft + pw - 110) + "\" y2=\"" + fmt(ly - 4) + "\" stroke=\"";
        out += color;
        out += "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + fmt(kLeft + pw - 104) + "\" y=\"" + fmt(ly) + "\">" + s.label +
               "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

std::string bar_chart(const std::string& title, const std::vector<std::string>& labels,
                      const std::vector<double>& values) {
    double v_max = 0.0;
    for (double v : values) v_max = std::max(v_max, v);
    if (v_max <= 0.0) v_max = 1.0;

    const double pw = kWidth - kLeft - kRight;
    const double ph = kHeight - kTop - kBottom;
    const double slot = pw / static_cast<double>(values.empty() ? 1 : values.size());

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) + "\" height=\"" +
           fmt(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
           title + "</text>\n";
    out += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(kTop + ph) + "\" x2=\"" +
           fmt(kLeft + pw) + "\" y2=\"" + fmt(kTop + ph) + "\" stroke=\"#333\"/>\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        double bh = values[i] / v_max * ph;
        double x = kLeft + slot * static_cast<double>(i) + slot * 0.15;
        out += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(kTop + ph - bh) + "\" width=\"" +
               fmt(slot * 0.7) + "\" height=\"" + fmt(bh) + "\" fill=\"#1f77b4\"/>\n";
        out += "<text x=\"" + fmt(x + slot * 0.35) + "\" y=\"" + fmt(kTop + ph + 16) +
               "\" text-anchor=\"middle\">" + labels[i] + "</text>\n";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", values[i]);
        out += "<text x=\"" + fmt(x + slot * 0.35) + "\" y=\"" + fmt(kTop + ph - bh - 4) +
               "\" text-anchor=\"middle\" font-size=\"10\">" + buf + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + path);
    f << content;
}

}  // namespace fedsim::svg
