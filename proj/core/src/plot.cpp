#include "conrad/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace conrad {

namespace {

constexpr double kW = 680, kH = 420;
constexpr double kLeft = 64, kRight = 24, kTop = 28, kBottom = 46;

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                         "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

struct Canvas {
  std::ostringstream body;

  void line(double x1, double y1, double x2, double y2, const std::string& style) {
    body << "<line x1='" << fmt(x1) << "' y1='" << fmt(y1) << "' x2='" << fmt(x2) << "' y2='"
         << fmt(y2) << "' " << style << "/>\n";
  }
  void text(double x, double y, const std::string& s, const std::string& extra = "") {
    body << "<text x='" << fmt(x) << "' y='" << fmt(y) << "' font-size='12' font-family='sans-serif' "
         << extra << ">" << s << "</text>\n";
  }
  void write(const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write plot: " + path);
    f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH
      << "' viewBox='0 0 " << kW << " " << kH << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << body.str() << "</svg>\n";
  }
};

void draw_axes(Canvas& c, double y_max, const std::string& x_label, const std::string& y_label) {
  c.line(kLeft, kH - kBottom, kW - kRight, kH - kBottom, "stroke='black'");
  c.line(kLeft, kTop, kLeft, kH - kBottom, "stroke='black'");
  for (int i = 0; i <= 5; ++i) {
    const double v = y_max * i / 5.0;
    const double y = kH - kBottom - (kH - kTop - kBottom) * i / 5.0;
    c.line(kLeft - 4, y, kLeft, y, "stroke='black'");
    c.text(8, y + 4, fmt(v));
  }
  c.text(kW / 2 - 20, kH - 10, x_label);
  c.text(8, kTop - 8, y_label);
}

}  // namespace

void plot_robust_curves(const std::vector<std::pair<std::string, std::vector<MetricsRow>>>& runs,
                        const std::string& out_svg) {
  if (runs.empty()) throw std::invalid_argument("no runs to plot");
  int max_epoch = 1;
  double y_max = 1.0;
  for (const auto& [label, rows] : runs) {
    if (rows.empty()) throw std::invalid_argument("metrics table for '" + label + "' is empty");
    for (const auto& r : rows) {
      max_epoch = std::max(max_epoch, r.epoch);
      y_max = std::max(y_max, r.pgd10_acc);
    }
  }
  y_max = std::ceil(y_max / 10.0) * 10.0;

  Canvas c;
  draw_axes(c, y_max, "epoch", "PGD-10 robust accuracy (%)");
  const double plot_w = kW - kLeft - kRight, plot_h = kH - kTop - kBottom;
  auto sx = [&](double e) { return kLeft + plot_w * (e - 1) / std::max(1, max_epoch - 1); };
  auto sy = [&](double v) { return kH - kBottom - plot_h * v / y_max; };

  // learning-rate drop markers from the first run
  const auto& first = runs.front().second;
  for (std::size_t i = 1; i < first.size(); ++i) {
    if (first[i].lr < first[i - 1].lr) {
      const double x = sx(first[i].epoch);
      c.line(x, kTop, x, kH - kBottom, "stroke='#999999' stroke-dasharray='4,3'");
      c.text(x + 3, kTop + 12, "lr drop", "fill='#777777'");
    }
  }

  int color = 0;
  for (const auto& [label, rows] : runs) {
    std::ostringstream pts;
    for (const auto& r : rows) pts << fmt(sx(r.epoch)) << ',' << fmt(sy(r.pgd10_acc)) << ' ';
    c.body << "<polyline fill='none' stroke='" << kColors[color % 8] << "' stroke-width='1.5' points='"
           << pts.str() << "'/>\n";
    c.text(kLeft + 10, kTop + 16 + 16 * color, label,
           "fill='" + std::string(kColors[color % 8]) + "'");
    ++color;
  }
  c.write(out_svg);
}

void plot_fraction_bars(const std::vector<std::pair<std::string, double>>& bars,
                        const std::string& out_svg) {
  if (bars.empty()) throw std::invalid_argument("no bars to plot");
  double y_max = 1.0;
  for (const auto& [label, v] : bars) y_max = std::max(y_max, v);
  y_max = std::ceil(y_max / 10.0) * 10.0;

  Canvas c;
  draw_axes(c, y_max, "run", "PGD-10 robust accuracy (%)");
  const double plot_w = kW - kLeft - kRight, plot_h = kH - kTop - kBottom;
  const double slot = plot_w / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double h = plot_h * bars[i].second / y_max;
    const double x = kLeft + slot * static_cast<double>(i) + slot * 0.15;
    c.body << "<rect x='" << fmt(x) << "' y='" << fmt(kH - kBottom - h) << "' width='"
           << fmt(slot * 0.7) << "' height='" << fmt(h) << "' fill='" << kColors[i % 8] << "'/>\n";
    c.text(x, kH - kBottom + 16, bars[i].first);
    c.text(x, kH - kBottom - h - 6, fmt(bars[i].second));
  }
  c.write(out_svg);
}

}  // namespace conrad
