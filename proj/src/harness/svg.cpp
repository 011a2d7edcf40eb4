#include "harness/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace capsnet {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
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

std::string text(double x, double y, const std::string& s, const char* anchor = "middle", int size = 12) {
  return "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" font-size=\"" + std::to_string(size) +
         "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2, const char* stroke, const char* extra = "") {
  return "<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" + fmt(x2) + "\" y2=\"" + fmt(y2) +
         "\" stroke=\"" + stroke + "\"" + extra + "/>\n";
}

}  // namespace

std::string activation_fill(double a) {
  if (!std::isfinite(a)) a = 0.0;
  a = std::clamp(a, 0.0, 1.0);
  // white -> kFullFill (8, 48, 107)
  auto mix = [a](int full) { return static_cast<int>(std::lround(255.0 + (full - 255.0) * a)); };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", mix(0x08), mix(0x30), mix(0x6b));
  return buf;
}

std::string render_line_chart(const LineChart& chart) {
  const double W = 640, H = 420, left = 70, right = 150, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : chart.series)
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (chart.reference_y) {
    y0 = std::min(y0, *chart.reference_y);
    y1 = std::max(y1, *chart.reference_y);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (chart.y_min) y0 = *chart.y_min;
  if (chart.y_max) y1 = *chart.y_max;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return top + ph - (y - y0) / (y1 - y0) * ph; };

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W) + "\" height=\"" + fmt(H) +
                  "\" viewBox=\"0 0 " + fmt(W) + " " + fmt(H) + "\" font-family=\"sans-serif\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += text(left + pw / 2, 22, chart.title, "middle", 15);
  s += line(left, top + ph, left + pw, top + ph, "black");
  s += line(left, top, left, top + ph, "black");
  for (int i = 0; i <= 5; ++i) {
    const double yv = y0 + (y1 - y0) * i / 5.0, yy = py(yv);
    s += line(left - 4, yy, left, yy, "black");
    s += line(left, yy, left + pw, yy, "#e0e0e0");
    s += text(left - 8, yy + 4, tick_label(yv), "end", 11);
  }
  // x ticks at the distinct x values of the data
  std::vector<double> xs;
  for (const auto& se : chart.series)
    for (auto [x, y] : se.points)
      if (std::isfinite(x)) xs.push_back(x);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs) {
    s += line(px(x), top + ph, px(x), top + ph + 4, "black");
    s += text(px(x), top + ph + 18, tick_label(x), "middle", 11);
  }
  s += text(left + pw / 2, H - 18, chart.x_label);
  s += "<text x=\"18\" y=\"" + fmt(top + ph / 2) + "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
       fmt(top + ph / 2) + ")\">" + escape(chart.y_label) + "</text>\n";

  if (chart.reference_y) {
    const double yy = py(*chart.reference_y);
    s += line(left, yy, left + pw, yy, "#555555", " stroke-dasharray=\"6 4\"");
    s += text(left + pw + 6, yy + 4, chart.reference_label, "start", 11);
  }

  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const auto& se = chart.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::string pts;
    for (auto [x, y] : se.points)
      if (std::isfinite(x) && std::isfinite(y)) pts += fmt(px(x)) + "," + fmt(py(y)) + " ";
    if (!pts.empty()) pts.pop_back();
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    for (auto [x, y] : se.points)
      if (std::isfinite(x) && std::isfinite(y))
        s += "<circle class=\"point\" cx=\"" + fmt(px(x)) + "\" cy=\"" + fmt(py(y)) + "\" r=\"3.5\" fill=\"" + color +
             "\"/>\n";
    const double ly = top + 16 + 20.0 * static_cast<double>(k);
    s += line(left + pw + 10, ly, left + pw + 30, ly, color, " stroke-width=\"2\"");
    s += text(left + pw + 36, ly + 4, se.name, "start", 12);
  }
  s += "</svg>\n";
  return s;
}

std::string render_capsule_grid(const std::string& title, const std::vector<CapsuleRow>& rows, double threshold) {
  const double cell = 22, r = 8, left = 90, top = 40;
  std::size_t widest = 1;
  for (const auto& row : rows) widest = std::max(widest, row.activations.size());
  const double W = left + cell * static_cast<double>(widest) + 20;
  const double H = top + cell * static_cast<double>(rows.size()) + 20;

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W) + "\" height=\"" + fmt(H) +
                  "\" viewBox=\"0 0 " + fmt(W) + " " + fmt(H) + "\" font-family=\"sans-serif\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += text(W / 2, 22, title, "middle", 14);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double cy = top + cell * (static_cast<double>(i) + 0.5);
    s += text(left - 10, cy + 4, rows[i].label, "end", 11);
    for (std::size_t j = 0; j < rows[i].activations.size(); ++j) {
      const double a = rows[i].activations[j];
      const bool dead = a <= threshold;
      s += "<circle class=\"capsule\" cx=\"" + fmt(left + cell * (static_cast<double>(j) + 0.5)) + "\" cy=\"" +
           fmt(cy) + "\" r=\"" + fmt(r) + "\" fill=\"" + activation_fill(a) + "\" stroke=\"" +
           (dead ? "#d62728" : "#888888") + "\"><title>" + tick_label(a) + "</title></circle>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

}  // namespace capsnet
