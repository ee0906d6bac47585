#include "factorrisk/svg_plot.hpp"

#include "factorrisk/csv.hpp"
#include "factorrisk/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace factorrisk::svg {

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;
const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
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

struct Frame {
    double lo, hi;
    double y(double v) const {
        const double span = hi > lo ? hi - lo : 1.0;
        return kTop + (kHeight - kTop - kBottom) * (1.0 - (v - lo) / span);
    }
};

void header(std::ostringstream& os, const std::string& title, const Frame& f) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
       << escape(title) << "</text>\n";
    os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
       << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight << "\" y2=\""
       << kHeight - kBottom << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = f.lo + (f.hi - f.lo) * i / 4.0;
        os << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(f.y(v) + 4) << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
           << label(v) << "</text>\n";
        os << "<line x1=\"" << kLeft << "\" y1=\"" << num(f.y(v)) << "\" x2=\"" << kWidth - kRight << "\" y2=\"" << num(f.y(v))
           << "\" stroke=\"#ddd\"/>\n";
    }
}

Frame frame_of(const std::vector<double>& all, std::optional<double> extra = std::nullopt) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : all)
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (extra) {
        lo = std::min(lo, *extra);
        hi = std::max(hi, *extra);
    }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi == lo) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

}  // namespace

std::string line_chart(const std::string& title, const std::vector<Series>& series, const std::vector<std::string>& x_labels) {
    std::vector<double> all;
    std::size_t n = 0;
    for (const auto& s : series) {
        all.insert(all.end(), s.values.begin(), s.values.end());
        n = std::max(n, s.values.size());
    }
    const Frame f = frame_of(all);
    std::ostringstream os;
    header(os, title, f);
    const double plot_w = kWidth - kLeft - kRight;
    auto x = [&](std::size_t i) { return kLeft + (n > 1 ? plot_w * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0); };

    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* colour = kPalette[k % (sizeof(kPalette) / sizeof(kPalette[0]))];
        os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[k].values.size(); ++i)
            if (std::isfinite(series[k].values[i])) os << num(x(i)) << ',' << num(f.y(series[k].values[i])) << ' ';
        os << "\"/>\n";
        os << "<text x=\"" << num(kLeft + 10 + 150.0 * static_cast<double>(k)) << "\" y=\"" << kHeight - 12
           << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << colour << "\">" << escape(series[k].name) << "</text>\n";
    }
    if (!x_labels.empty()) {
        os << "<text x=\"" << kLeft << "\" y=\"" << kHeight - kBottom + 16 << "\" font-family=\"sans-serif\" font-size=\"11\">"
           << escape(x_labels.front()) << "</text>\n";
        os << "<text x=\"" << kWidth - kRight << "\" y=\"" << kHeight - kBottom + 16
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << escape(x_labels.back()) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string bar_chart(const std::string& title, const std::vector<std::string>& labels, const std::vector<double>& values,
                      std::optional<double> reference) {
    std::vector<double> all = values;
    all.push_back(0.0);
    const Frame f = frame_of(all, reference);
    std::ostringstream os;
    header(os, title, f);
    const double plot_w = kWidth - kLeft - kRight;
    const double slot = values.empty() ? plot_w : plot_w / static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) continue;
        const double top = std::min(f.y(values[i]), f.y(0.0));
        const double h = std::abs(f.y(values[i]) - f.y(0.0));
        const double x0 = kLeft + slot * static_cast<double>(i) + 0.15 * slot;
        os << "<rect x=\"" << num(x0) << "\" y=\"" << num(top) << "\" width=\"" << num(0.7 * slot) << "\" height=\"" << num(h)
           << "\" fill=\"" << kPalette[0] << "\"/>\n";
        if (i < labels.size())
            os << "<text x=\"" << num(x0 + 0.35 * slot) << "\" y=\"" << kHeight - kBottom + 16
               << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << escape(labels[i]) << "</text>\n";
    }
    if (reference)
        os << "<line x1=\"" << kLeft << "\" y1=\"" << num(f.y(*reference)) << "\" x2=\"" << kWidth - kRight << "\" y2=\""
           << num(f.y(*reference)) << "\" stroke=\"" << kPalette[1] << "\" stroke-dasharray=\"6,4\"/>\n";
    os << "</svg>\n";
    return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& svg) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cli", "WriteFailed", "cannot open output file", {{"path", path.string()}});
    out << svg;
}

}  // namespace factorrisk::svg
