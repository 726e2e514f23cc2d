#pragma once

// Deterministic SVG plots: fixed canvas, fixed number formatting.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <sstream>
#include <string>
#include <vector>

#include <cfsync/cfsync.hpp>

namespace cfsync::cli {

namespace svg {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

inline std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline const char* color(std::size_t i) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
    return palette[i % 8];
}

struct Frame {
    double x0, y0, w, h;           // pixel box
    double xmin, xmax, ymin, ymax;  // data box

    double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
    double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

inline void padded_range(double& lo, double& hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        lo = -1.0;
        hi = 1.0;
    }
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
        const double c = 0.5 * (hi + lo);
        const double d = std::max(1e-6, 1e-3 * std::abs(c));
        lo = c - d;
        hi = c + d;
    }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
}

inline void axes(std::ostringstream& os, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
    os << "<rect x=\"" << fmt(f.x0) << "\" y=\"" << fmt(f.y0) << "\" width=\"" << fmt(f.w) << "\" height=\"" << fmt(f.h)
       << "\" fill=\"none\" stroke=\"#000\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double x = f.xmin + (f.xmax - f.xmin) * i / 4.0;
        const double y = f.ymin + (f.ymax - f.ymin) * i / 4.0;
        os << "<text x=\"" << fmt(f.px(x)) << "\" y=\"" << fmt(f.y0 + f.h + 16) << "\" font-size=\"11\" text-anchor=\"middle\">"
           << label(x) << "</text>\n";
        os << "<text x=\"" << fmt(f.x0 - 6) << "\" y=\"" << fmt(f.py(y) + 4) << "\" font-size=\"11\" text-anchor=\"end\">"
           << label(y) << "</text>\n";
    }
    os << "<text x=\"" << fmt(f.x0 + f.w / 2) << "\" y=\"" << fmt(f.y0 + f.h + 34)
       << "\" font-size=\"12\" text-anchor=\"middle\">" << xlabel << "</text>\n";
    os << "<text x=\"" << fmt(f.x0 - 58) << "\" y=\"" << fmt(f.y0 + f.h / 2) << "\" font-size=\"12\" text-anchor=\"middle\" "
       << "transform=\"rotate(-90 " << fmt(f.x0 - 58) << " " << fmt(f.y0 + f.h / 2) << ")\">" << ylabel << "</text>\n";
}

// Polyline broken at non-finite or clipped points.
inline void polyline(std::ostringstream& os, const Frame& f, const std::vector<double>& x, const std::vector<double>& y,
                     const char* stroke) {
    std::string pts;
    auto flush = [&]() {
        if (!pts.empty()) {
            os << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.2\" points=\"" << pts << "\"/>\n";
            pts.clear();
        }
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool inside = std::isfinite(x[i]) && std::isfinite(y[i]) && x[i] >= f.xmin && x[i] <= f.xmax &&
                            y[i] >= f.ymin && y[i] <= f.ymax;
        if (!inside) {
            flush();
            continue;
        }
        if (!pts.empty()) pts += ' ';
        pts += fmt(f.px(x[i])) + "," + fmt(f.py(y[i]));
    }
    flush();
}

inline void legend(std::ostringstream& os, double x, double y, const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
        const double yy = y + 16.0 * static_cast<double>(i);
        os << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(yy) << "\" x2=\"" << fmt(x + 18) << "\" y2=\"" << fmt(yy)
           << "\" stroke=\"" << color(i) << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << fmt(x + 24) << "\" y=\"" << fmt(yy + 4) << "\" font-size=\"11\">" << names[i] << "</text>\n";
    }
}

inline std::string header(int w, int h) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
       << " " << h << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n";
    return os.str();
}

}  // namespace svg

// Two stacked panels: rocov and frequency (Hz) per node.
inline std::string trajectory_svg(const Trajectory& traj, const std::vector<std::string>& names) {
    if (traj.samples.empty()) throw ConfigError("cannot plot an empty trajectory");
    const std::size_t n = traj.node_count();
    std::vector<double> t;
    std::vector<std::vector<double>> eps(n), freq(n);
    for (const auto& s : traj.samples) {
        t.push_back(s.t);
        for (std::size_t k = 0; k < n; ++k) {
            eps[k].push_back(s.nodes[k].varpi.real());
            freq[k].push_back(s.nodes[k].varpi.imag() / (2.0 * kPi));
        }
    }
    auto range = [](const std::vector<std::vector<double>>& series, double& lo, double& hi) {
        lo = std::numeric_limits<double>::infinity();
        hi = -lo;
        for (const auto& s : series) {
            for (double v : s) {
                if (std::isfinite(v)) {
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
            }
        }
        svg::padded_range(lo, hi);
    };
    double tlo = t.front(), thi = t.back();
    if (thi <= tlo) thi = tlo + 1e-6;
    double elo, ehi, flo, fhi;
    range(eps, elo, ehi);
    range(freq, flo, fhi);
    const svg::Frame top{90, 30, 600, 230, tlo, thi, elo, ehi};
    const svg::Frame bottom{90, 320, 600, 230, tlo, thi, flo, fhi};

    std::ostringstream os;
    os << svg::header(820, 600);
    svg::axes(os, top, "t (s)", "rocov (1/s)");
    svg::axes(os, bottom, "t (s)", "frequency (Hz)");
    for (std::size_t k = 0; k < n; ++k) {
        svg::polyline(os, top, t, eps[k], svg::color(k));
        svg::polyline(os, bottom, t, freq[k], svg::color(k));
    }
    std::vector<std::string> legend;
    for (std::size_t k = 0; k < n; ++k) legend.push_back(k < names.size() ? "node " + names[k] : "node " + std::to_string(k + 1));
    svg::legend(os, 705, 40, legend);
    os << "</svg>\n";
    return os.str();
}

// Nyquist image with the unit circle and a marker at the critical point.
inline std::string nyquist_svg(const NyquistCurve& curve, const std::string& title) {
    if (curve.image.empty()) throw ConfigError("cannot plot an empty Nyquist curve");
    std::vector<double> mags;
    for (const cplx& z : curve.image) {
        if (std::isfinite(std::abs(z))) mags.push_back(std::abs(z));
    }
    std::sort(mags.begin(), mags.end());
    double r = mags.empty() ? 2.0 : mags[static_cast<std::size_t>(0.9 * static_cast<double>(mags.size() - 1))];
    r = std::max({r, 2.0 * std::abs(curve.test_point), 1.5});
    const svg::Frame f{80, 40, 520, 520, -r, r, -r, r};
    std::vector<double> x, y;
    for (const cplx& z : curve.image) {
        x.push_back(z.real());
        y.push_back(z.imag());
    }
    std::ostringstream os;
    os << svg::header(640, 640);
    svg::axes(os, f, "Re", "Im");
    os << "<text x=\"340\" y=\"24\" font-size=\"13\" text-anchor=\"middle\">" << title << "</text>\n";
    os << "<line x1=\"" << svg::fmt(f.px(-r)) << "\" y1=\"" << svg::fmt(f.py(0)) << "\" x2=\"" << svg::fmt(f.px(r))
       << "\" y2=\"" << svg::fmt(f.py(0)) << "\" stroke=\"#bbb\"/>\n";
    os << "<line x1=\"" << svg::fmt(f.px(0)) << "\" y1=\"" << svg::fmt(f.py(-r)) << "\" x2=\"" << svg::fmt(f.px(0))
       << "\" y2=\"" << svg::fmt(f.py(r)) << "\" stroke=\"#bbb\"/>\n";
    const double unit = f.px(1.0) - f.px(0.0);
    os << "<circle cx=\"" << svg::fmt(f.px(0)) << "\" cy=\"" << svg::fmt(f.py(0)) << "\" r=\"" << svg::fmt(unit)
       << "\" fill=\"none\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    svg::polyline(os, f, x, y, svg::color(0));
    os << "<circle cx=\"" << svg::fmt(f.px(curve.test_point.real())) << "\" cy=\"" << svg::fmt(f.py(curve.test_point.imag()))
       << "\" r=\"4\" fill=\"#d62728\"/>\n";
    os << "</svg>\n";
    return os.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace cfsync::cli
