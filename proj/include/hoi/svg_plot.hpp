#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "hoi/error.hpp"

namespace hoi {

struct SvgSeries {
    std::string label;
    std::vector<double> values;
};

// Minimal line chart; enough for loss curves and per-sample metric traces.
inline void write_svg_chart(const std::string& path, const std::string& title,
                            const std::vector<SvgSeries>& series) {
    const int width = 640, height = 360;
    const int ml = 60, mr = 20, mt = 40, mb = 40;
    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    double lo = 1e300, hi = -1e300;
    std::size_t longest = 0;
    for (const auto& s : series) {
        longest = std::max(longest, s.values.size());
        for (double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (longest == 0) {
        lo = 0;
        hi = 1;
    }
    if (hi - lo < 1e-12) {
        hi = lo + 1;
        lo -= 0.5;
    }

    auto sx = [&](std::size_t i, std::size_t n) {
        if (n <= 1) return double(ml);
        return ml + (width - ml - mr) * static_cast<double>(i) / (n - 1);
    };
    auto sy = [&](double v) { return mt + (height - mt - mb) * (hi - v) / (hi - lo); };

    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
       << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
       << title << "</text>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr
       << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
       << height - mb << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << sy(hi) + 4
       << "\" text-anchor=\"end\" font-size=\"11\">" << hi << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << sy(lo) + 4
       << "\" text-anchor=\"end\" font-size=\"11\">" << lo << "</text>\n";

    int color = 0;
    int legend_y = mt + 4;
    for (const auto& s : series) {
        const char* stroke = palette[color % 6];
        if (s.values.size() == 1) {
            os << "<circle cx=\"" << sx(0, 1) << "\" cy=\"" << sy(s.values[0])
               << "\" r=\"4\" fill=\"" << stroke << "\"/>\n";
        } else if (!s.values.empty()) {
            os << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < s.values.size(); ++i) {
                os << sx(i, s.values.size()) << "," << sy(s.values[i]) << " ";
            }
            os << "\"/>\n";
        }
        os << "<text x=\"" << width - mr - 4 << "\" y=\"" << legend_y
           << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << stroke << "\">" << s.label
           << "</text>\n";
        legend_y += 14;
        ++color;
    }
    os << "</svg>\n";

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out << os.str();
}

}  // namespace hoi
