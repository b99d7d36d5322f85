#include "svg.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace trackfuse::cli {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 60, kRight = 150, kTop = 40, kBottom = 50;
const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
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

void open(std::ostringstream& o, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << escape(title) << "</text>\n";
}

void axes(std::ostringstream& o, double y0, double y1, const std::string& y_label) {
  const double x = kLeft, bottom = kHeight - kBottom;
  o << "<line x1=\"" << x << "\" y1=\"" << kTop << "\" x2=\"" << x << "\" y2=\"" << bottom
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << x << "\" y1=\"" << bottom << "\" x2=\"" << kWidth - kRight << "\" y2=\""
    << bottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y0 + (y1 - y0) * i / 4.0;
    const double py = bottom - (bottom - kTop) * i / 4.0;
    o << "<text x=\"" << x - 6 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">" << num(v)
      << "</text>\n";
  }
  o << "<text x=\"14\" y=\"" << (kTop + bottom) / 2 << "\" transform=\"rotate(-90 14 "
    << (kTop + bottom) / 2 << ")\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
}

}  // namespace

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<Series>& series) {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (first) {
        x0 = x1 = x;
        first = false;
      }
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
      y0 = std::min(y0, y);
    }
  if (x1 == x0) x1 = x0 + 1;
  const double bottom = kHeight - kBottom, right = kWidth - kRight;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * (right - kLeft); };
  auto py = [&](double y) { return bottom - (y - y0) / (y1 - y0) * (bottom - kTop); };

  std::ostringstream o;
  open(o, title);
  axes(o, y0, y1, y_label);
  for (int i = 0; i <= 4; ++i) {
    const double v = x0 + (x1 - x0) * i / 4.0;
    o << "<text x=\"" << px(v) << "\" y=\"" << bottom + 16 << "\" text-anchor=\"middle\">"
      << num(v) << "</text>\n";
  }
  o << "<text x=\"" << (kLeft + right) / 2 << "\" y=\"" << kHeight - 12
    << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % 6];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < series[k].points.size(); ++i)
      o << (i ? " " : "") << num(px(series[k].points[i].first)) << ","
        << num(py(series[k].points[i].second));
    o << "\"/>\n";
    const double ly = kTop + 18.0 * static_cast<double>(k);
    o << "<rect x=\"" << right + 12 << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\""
      << color << "\"/>\n<text x=\"" << right + 30 << "\" y=\"" << ly + 10 << "\">"
      << escape(series[k].label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string bar_chart(const std::string& title, const std::string& y_label,
                      const std::vector<std::pair<std::string, double>>& bars) {
  double y1 = 1.0;
  for (const auto& b : bars) y1 = std::max(y1, b.second);
  const double bottom = kHeight - kBottom, right = kWidth - kRight;
  const double slot = (right - kLeft) / static_cast<double>(std::max<std::size_t>(bars.size(), 1));

  std::ostringstream o;
  open(o, title);
  axes(o, 0.0, y1, y_label);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double h = bars[i].second / y1 * (bottom - kTop);
    const double x = kLeft + slot * (static_cast<double>(i) + 0.2);
    o << "<rect x=\"" << num(x) << "\" y=\"" << num(bottom - h) << "\" width=\"" << num(slot * 0.6)
      << "\" height=\"" << num(h) << "\" fill=\"" << kPalette[i % 6] << "\"/>\n";
    o << "<text x=\"" << num(x + slot * 0.3) << "\" y=\"" << bottom + 16
      << "\" text-anchor=\"middle\">" << escape(bars[i].first) << "</text>\n";
    o << "<text x=\"" << num(x + slot * 0.3) << "\" y=\"" << num(bottom - h - 4)
      << "\" text-anchor=\"middle\">" << num(bars[i].second) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace trackfuse::cli
