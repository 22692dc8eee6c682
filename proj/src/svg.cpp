#include "mflow/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mflow {

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

}  // namespace

SvgPlot::SvgPlot(std::string title, std::string xlabel, std::string ylabel, bool logx, bool logy)
    : title_(std::move(title)), xlabel_(std::move(xlabel)), ylabel_(std::move(ylabel)),
      logx_(logx), logy_(logy) {}

void SvgPlot::add_line(const std::string& name, const std::vector<double>& xs,
                       const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("SvgPlot: xs/ys length mismatch");
    series_.push_back({name, xs, ys, false});
}

void SvgPlot::add_scatter(const std::string& name, const std::vector<double>& xs,
                          const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("SvgPlot: xs/ys length mismatch");
    series_.push_back({name, xs, ys, true});
}

std::string SvgPlot::render() const {
    const double W = 800, H = 600;
    const double L = 80, R = 160, T = 50, Bm = 60;  // margins (right side holds the legend)

    auto tx = [&](double v) { return logx_ ? std::log10(v) : v; };
    auto ty = [&](double v) { return logy_ ? std::log10(v) : v; };

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series_) {
        for (std::size_t i = 0; i < s.xs.size(); ++i) {
            const double x = s.xs[i], y = s.ys[i];
            if ((logx_ && x <= 0.0) || (logy_ && y <= 0.0)) continue;
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            xmin = std::min(xmin, tx(x));
            xmax = std::max(xmax, tx(x));
            ymin = std::min(ymin, ty(y));
            ymax = std::max(ymax, ty(y));
        }
    }
    if (!(xmin <= xmax)) { xmin = 0; xmax = 1; }
    if (!(ymin <= ymax)) { ymin = 0; ymax = 1; }
    if (xmax == xmin) { xmax += 0.5; xmin -= 0.5; }
    if (ymax == ymin) { ymax += 0.5; ymin -= 0.5; }
    const double xpad = 0.03 * (xmax - xmin), ypad = 0.05 * (ymax - ymin);
    xmin -= xpad; xmax += xpad; ymin -= ypad; ymax += ypad;

    auto px = [&](double v) { return L + (tx(v) - xmin) / (xmax - xmin) * (W - L - R); };
    auto py = [&](double v) { return H - Bm - (ty(v) - ymin) / (ymax - ymin) * (H - T - Bm); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"600\" "
          "viewBox=\"0 0 800 600\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"800\" height=\"600\" fill=\"white\"/>\n";
    os << "<text x=\"" << num((L + W - R) / 2) << "\" y=\"28\" text-anchor=\"middle\" "
          "font-size=\"16\">" << escape(title_) << "</text>\n";
    os << "<rect x=\"" << num(L) << "\" y=\"" << num(T) << "\" width=\"" << num(W - L - R)
       << "\" height=\"" << num(H - T - Bm) << "\" fill=\"none\" stroke=\"#444\"/>\n";

    const int nticks = 6;
    for (int i = 0; i <= nticks; ++i) {
        const double fx = xmin + (xmax - xmin) * i / nticks;
        const double fy = ymin + (ymax - ymin) * i / nticks;
        const double gx = L + (W - L - R) * i / nticks;
        const double gy = H - Bm - (H - T - Bm) * i / nticks;
        const double vx = logx_ ? std::pow(10.0, fx) : fx;
        const double vy = logy_ ? std::pow(10.0, fy) : fy;
        os << "<line x1=\"" << num(gx) << "\" y1=\"" << num(H - Bm) << "\" x2=\"" << num(gx)
           << "\" y2=\"" << num(H - Bm + 5) << "\" stroke=\"#444\"/>\n";
        os << "<text x=\"" << num(gx) << "\" y=\"" << num(H - Bm + 18)
           << "\" text-anchor=\"middle\">" << num(vx) << "</text>\n";
        os << "<line x1=\"" << num(L - 5) << "\" y1=\"" << num(gy) << "\" x2=\"" << num(L)
           << "\" y2=\"" << num(gy) << "\" stroke=\"#444\"/>\n";
        os << "<text x=\"" << num(L - 8) << "\" y=\"" << num(gy + 4)
           << "\" text-anchor=\"end\">" << num(vy) << "</text>\n";
    }
    os << "<text x=\"" << num((L + W - R) / 2) << "\" y=\"" << num(H - 16)
       << "\" text-anchor=\"middle\">" << escape(xlabel_) << "</text>\n";
    os << "<text x=\"20\" y=\"" << num((T + H - Bm) / 2)
       << "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " << num((T + H - Bm) / 2)
       << ")\">" << escape(ylabel_) << "</text>\n";

    int ci = 0;
    for (const auto& s : series_) {
        const std::string color = kPalette[ci % 8];
        if (s.scatter) {
            for (std::size_t i = 0; i < s.xs.size(); ++i) {
                if ((logx_ && s.xs[i] <= 0) || (logy_ && s.ys[i] <= 0)) continue;
                os << "<circle cx=\"" << num(px(s.xs[i])) << "\" cy=\"" << num(py(s.ys[i]))
                   << "\" r=\"3\" fill=\"" << color << "\"/>\n";
            }
        } else {
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.xs.size(); ++i) {
                if ((logx_ && s.xs[i] <= 0) || (logy_ && s.ys[i] <= 0)) continue;
                os << num(px(s.xs[i])) << ',' << num(py(s.ys[i])) << ' ';
            }
            os << "\"/>\n";
        }
        const double ly = T + 16 + 18 * ci;
        os << "<rect x=\"" << num(W - R + 10) << "\" y=\"" << num(ly - 9)
           << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
        os << "<text x=\"" << num(W - R + 28) << "\" y=\"" << num(ly + 2) << "\">"
           << escape(s.name) << "</text>\n";
        ++ci;
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace mflow
