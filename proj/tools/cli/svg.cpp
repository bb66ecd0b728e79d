#include "svg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace divelab::svg {

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 420;
constexpr double kLeft = 70;
constexpr double kRight = 170;
constexpr double kTop = 40;
constexpr double kBottom = 60;

const char* const kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                                "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

std::string fixed(double v, int digits = 2) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
  return std::string(buf, r.ptr);
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* color(std::size_t i) { return kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))]; }

void header(std::ostringstream& o, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(kWidth, 0) << "\" height=\""
    << fixed(kHeight, 0) << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << fixed(kWidth / 2, 0) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << escape(title) << "</text>\n";
}

// Axes with five horizontal ticks from 0 to y_max.
void axes(std::ostringstream& o, double y_max, const std::string& y_label) {
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  o << "<line x1=\"" << fixed(x0) << "\" y1=\"" << fixed(y0) << "\" x2=\"" << fixed(x1)
    << "\" y2=\"" << fixed(y0) << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << fixed(x0) << "\" y1=\"" << fixed(kTop) << "\" x2=\"" << fixed(x0)
    << "\" y2=\"" << fixed(y0) << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double v = y_max * i / 5.0;
    const double y = y0 - (y0 - kTop) * i / 5.0;
    o << "<line x1=\"" << fixed(x0 - 4) << "\" y1=\"" << fixed(y) << "\" x2=\"" << fixed(x1)
      << "\" y2=\"" << fixed(y) << "\" stroke=\"#ddd\"/>\n"
      << "<text x=\"" << fixed(x0 - 8) << "\" y=\"" << fixed(y + 4) << "\" text-anchor=\"end\">"
      << fixed(v, y_max < 10 ? 2 : 0) << "</text>\n";
  }
  o << "<text transform=\"translate(16," << fixed((kTop + y0) / 2) << ") rotate(-90)\" "
    << "text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
}

void legend(std::ostringstream& o, const std::vector<std::string>& names) {
  const double x = kWidth - kRight + 15;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 18.0 * static_cast<double>(i);
    o << "<rect x=\"" << fixed(x) << "\" y=\"" << fixed(y) << "\" width=\"12\" height=\"12\" fill=\""
      << color(i) << "\"/>\n"
      << "<text x=\"" << fixed(x + 18) << "\" y=\"" << fixed(y + 10) << "\">" << escape(names[i])
      << "</text>\n";
  }
}

double nice_max(double v) {
  if (!(v > 0.0) || !std::isfinite(v)) return 1.0;
  const double mag = std::pow(10.0, std::floor(std::log10(v)));
  for (double step : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (v <= step * mag) return step * mag;
  }
  return 10.0 * mag;
}

}  // namespace

std::string grouped_bar_chart(const std::string& title, const std::string& y_label,
                              const std::vector<std::string>& groups,
                              const std::vector<BarSeries>& series) {
  double top = 0.0;
  for (const auto& s : series) {
    for (double v : s.values) {
      if (std::isfinite(v)) top = std::max(top, v);
    }
  }
  const double y_max = nice_max(top);

  std::ostringstream o;
  header(o, title);
  axes(o, y_max, y_label);
  const double x0 = kLeft;
  const double y0 = kHeight - kBottom;
  const double group_w = (kWidth - kRight - kLeft) / static_cast<double>(std::max<std::size_t>(1, groups.size()));
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(1, series.size()));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = x0 + group_w * static_cast<double>(g) + group_w * 0.1;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = g < series[s].values.size() ? series[s].values[g] : 0.0;
      if (!std::isfinite(v)) continue;
      const double h = (y0 - kTop) * v / y_max;
      o << "<rect x=\"" << fixed(gx + bar_w * static_cast<double>(s)) << "\" y=\"" << fixed(y0 - h)
        << "\" width=\"" << fixed(bar_w) << "\" height=\"" << fixed(h) << "\" fill=\"" << color(s)
        << "\"/>\n";
    }
    o << "<text x=\"" << fixed(gx + group_w * 0.4) << "\" y=\"" << fixed(y0 + 18)
      << "\" text-anchor=\"middle\">" << escape(groups[g]) << "</text>\n";
  }
  std::vector<std::string> names;
  for (const auto& s : series) names.push_back(s.name);
  legend(o, names);
  o << "</svg>\n";
  return o.str();
}

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<double>& x,
                       const std::vector<LineSeries>& series) {
  double top = 0.0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      const double hi = s.mean[i] + (i < s.spread.size() ? s.spread[i] : 0.0);
      if (std::isfinite(hi)) top = std::max(top, hi);
    }
  }
  const double y_max = nice_max(top);
  const double x_lo = x.empty() ? 0.0 : *std::min_element(x.begin(), x.end());
  const double x_hi = x.empty() ? 1.0 : *std::max_element(x.begin(), x.end());
  const double x_span = x_hi > x_lo ? x_hi - x_lo : 1.0;

  std::ostringstream o;
  header(o, title);
  axes(o, y_max, y_label);
  const double px0 = kLeft + 20;
  const double px1 = kWidth - kRight - 20;
  const double y0 = kHeight - kBottom;
  auto px = [&](double v) { return px0 + (px1 - px0) * (v - x_lo) / x_span; };
  auto py = [&](double v) { return y0 - (y0 - kTop) * v / y_max; };

  for (double v : x) {
    o << "<text x=\"" << fixed(px(v)) << "\" y=\"" << fixed(y0 + 18) << "\" text-anchor=\"middle\">"
      << fixed(v, 3) << "</text>\n";
  }
  o << "<text x=\"" << fixed((px0 + px1) / 2) << "\" y=\"" << fixed(kHeight - 15)
    << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& line = series[s];
    o << "<polyline fill=\"none\" stroke=\"" << color(s) << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < line.mean.size() && i < x.size(); ++i) {
      o << (i ? " " : "") << fixed(px(x[i])) << ',' << fixed(py(line.mean[i]));
    }
    o << "\"/>\n";
    for (std::size_t i = 0; i < line.mean.size() && i < x.size(); ++i) {
      o << "<circle cx=\"" << fixed(px(x[i])) << "\" cy=\"" << fixed(py(line.mean[i]))
        << "\" r=\"3\" fill=\"" << color(s) << "\"/>\n";
      if (i < line.spread.size() && line.spread[i] > 0.0) {
        o << "<line x1=\"" << fixed(px(x[i])) << "\" y1=\"" << fixed(py(line.mean[i] - line.spread[i]))
          << "\" x2=\"" << fixed(px(x[i])) << "\" y2=\"" << fixed(py(line.mean[i] + line.spread[i]))
          << "\" stroke=\"" << color(s) << "\"/>\n";
      }
    }
  }
  std::vector<std::string> names;
  for (const auto& s : series) names.push_back(s.name);
  legend(o, names);
  o << "</svg>\n";
  return o.str();
}

}  // namespace divelab::svg
