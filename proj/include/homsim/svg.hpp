#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "homsim/analysis.hpp"
#include "homsim/detector.hpp"
#include "homsim/detector_fit.hpp"
#include "homsim/histogram.hpp"
#include "homsim/util.hpp"

namespace homsim {
namespace detail {

/// Fixed-canvas plot frame. Every coordinate is printed with two decimals
/// so a given input always produces byte-identical markup.
struct SvgFrame {
  static constexpr double kW = 800.0, kH = 500.0;
  static constexpr double kLeft = 70.0, kRight = 20.0, kTop = 20.0, kBottom = 50.0;
  double x0, x1, y0, y1;
  std::string body;

  SvgFrame(double xmin, double xmax, double ymin, double ymax)
      : x0(xmin), x1(xmax > xmin ? xmax : xmin + 1.0), y0(ymin),
        y1(ymax > ymin ? ymax : ymin + 1.0) {}

  double px(double x) const {
    return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight);
  }
  double py(double y) const {
    return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom);
  }
  static std::string c(double v) { return fmt_fixed(v, 2); }

  void line(double xa, double ya, double xb, double yb, const char* style) {
    body += "<line x1='" + c(xa) + "' y1='" + c(ya) + "' x2='" + c(xb) + "' y2='" + c(yb) +
            "' " + style + "/>\n";
  }
  void text(double x, double y, const std::string& s, const char* style) {
    body += "<text x='" + c(x) + "' y='" + c(y) + "' " + style + ">" + s + "</text>\n";
  }
  void circle(double x, double y, double r, const char* style) {
    body += "<circle cx='" + c(x) + "' cy='" + c(y) + "' r='" + c(r) + "' " + style + "/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const char* style) {
    if (pts.empty()) return;
    body += "<polyline points='";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) body += ' ';
      body += c(pts[i].first) + "," + c(pts[i].second);
    }
    body += std::string("' ") + style + "/>\n";
  }

  void axes(const std::string& xlabel, const std::string& ylabel) {
    const char* axis = "stroke='black' stroke-width='1'";
    line(kLeft, kTop, kLeft, kH - kBottom, axis);
    line(kLeft, kH - kBottom, kW - kRight, kH - kBottom, axis);
    const char* tick_style = "font-family='monospace' font-size='12' fill='black'";
    for (int i = 0; i <= 4; ++i) {
      double fx = x0 + (x1 - x0) * i / 4.0;
      double fy = y0 + (y1 - y0) * i / 4.0;
      line(px(fx), kH - kBottom, px(fx), kH - kBottom + 5, axis);
      text(px(fx) - 18, kH - kBottom + 20, fmt_g10(std::round(fx * 100.0) / 100.0), tick_style);
      line(kLeft - 5, py(fy), kLeft, py(fy), axis);
      text(8, py(fy) + 4, fmt_g10(std::round(fy * 1e4) / 1e4), tick_style);
    }
    const char* label_style = "font-family='monospace' font-size='14' fill='black'";
    text(kW / 2 - 30, kH - 12, xlabel, label_style);
    body += "<text x='16' y='" + c(kH / 2) + "' font-family='monospace' font-size='14' "
            "fill='black' transform='rotate(-90 16 " + c(kH / 2) + ")'>" + ylabel + "</text>\n";
  }

  std::string finish() const {
    std::string out = "<svg xmlns='http://www.w3.org/2000/svg' width='800' height='500' "
                      "viewBox='0 0 800 500'>\n<rect width='800' height='500' fill='white'/>\n";
    out += body;
    out += "</svg>\n";
    return out;
  }
};

}  // namespace detail

/// Scan points with error bars, plus the fitted dip when it converged.
inline std::string dip_svg(const std::vector<ScanPoint>& points, const DipFit* fit = nullptr) {
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  bool first = true;
  for (const ScanPoint& p : points) {
    if (!p.g2) continue;
    double e = p.g2_err.value_or(0.0);
    if (first) {
      xmin = xmax = p.tau_ps;
      ymin = *p.g2 - e;
      ymax = *p.g2 + e;
      first = false;
    } else {
      xmin = std::min(xmin, p.tau_ps);
      xmax = std::max(xmax, p.tau_ps);
      ymin = std::min(ymin, *p.g2 - e);
      ymax = std::max(ymax, *p.g2 + e);
    }
  }
  double pad = 0.05 * (ymax - ymin);
  detail::SvgFrame f(xmin, xmax, ymin - pad, ymax + pad + 1e-12);
  f.axes("delay [ps]", "g2");
  if (fit && fit->converged) {
    std::vector<std::pair<double, double>> curve;
    double q = 0.25 * fit->gamma_ps * fit->gamma_ps;
    for (int i = 0; i <= 256; ++i) {
      double x = xmin + (xmax - xmin) * i / 256.0;
      double d = x - fit->center_ps;
      double y = fit->baseline - fit->visibility * q / (d * d + q);
      curve.emplace_back(f.px(x), f.py(y));
    }
    f.polyline(curve, "fill='none' stroke='#c02020' stroke-width='1.5'");
    const char* note = "font-family='monospace' font-size='13' fill='#c02020'";
    f.text(detail::SvgFrame::kLeft + 10, detail::SvgFrame::kTop + 16,
           "V = " + fmt_fixed(fit->visibility, 4) + " +- " + fmt_fixed(fit->visibility_err, 4),
           note);
    f.text(detail::SvgFrame::kLeft + 10, detail::SvgFrame::kTop + 32,
           "Gamma = " + fmt_fixed(fit->gamma_ps, 2) + " +- " + fmt_fixed(fit->gamma_err_ps, 2) +
               " ps",
           note);
  }
  const char* pt = "fill='#204080'";
  const char* bar = "stroke='#204080' stroke-width='1'";
  for (const ScanPoint& p : points) {
    if (!p.g2) continue;
    double x = f.px(p.tau_ps), y = f.py(*p.g2);
    if (p.g2_err) {
      f.line(x, f.py(*p.g2 - *p.g2_err), x, f.py(*p.g2 + *p.g2_err), bar);
      f.line(x - 3, f.py(*p.g2 - *p.g2_err), x + 3, f.py(*p.g2 - *p.g2_err), bar);
      f.line(x - 3, f.py(*p.g2 + *p.g2_err), x + 3, f.py(*p.g2 + *p.g2_err), bar);
    }
    f.circle(x, y, 3.0, pt);
  }
  return f.finish();
}

/// Step outline of a histogram, with the fitted response overlaid when
/// available. x axis is time within the fold window.
inline std::string histogram_svg(const Histogram& h, const DetectorFit* fit = nullptr) {
  double xmin = static_cast<double>(h.origin_ps);
  double xmax = xmin + static_cast<double>(h.counts.size() * h.bin_width_ps);
  std::uint64_t cmax = 1;
  for (std::uint64_t c : h.counts) cmax = std::max(cmax, c);
  detail::SvgFrame f(xmin, xmax, 0.0, static_cast<double>(cmax) * 1.05);
  f.axes("time [ps]", "counts");
  std::vector<std::pair<double, double>> steps;
  steps.reserve(2 * h.counts.size() + 2);
  steps.emplace_back(f.px(xmin), f.py(0.0));
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    double xa = xmin + static_cast<double>(i * h.bin_width_ps);
    double xb = xa + static_cast<double>(h.bin_width_ps);
    double y = f.py(static_cast<double>(h.counts[i]));
    steps.emplace_back(f.px(xa), y);
    steps.emplace_back(f.px(xb), y);
  }
  steps.emplace_back(f.px(xmax), f.py(0.0));
  f.polyline(steps, "fill='none' stroke='#204080' stroke-width='1'");
  if (fit && fit->converged) {
    std::vector<std::pair<double, double>> curve;
    for (int i = 0; i <= 512; ++i) {
      double x = xmin + (xmax - xmin) * i / 512.0;
      double y = response_density(x, fit->params);
      curve.emplace_back(f.px(x), f.py(std::min(y, static_cast<double>(cmax) * 1.05)));
    }
    f.polyline(curve, "fill='none' stroke='#c02020' stroke-width='1.5'");
    f.text(detail::SvgFrame::kLeft + 10, detail::SvgFrame::kTop + 16,
           "FWHM = " + fmt_fixed(fit->fwhm_ps, 2) + " ps",
           "font-family='monospace' font-size='13' fill='#c02020'");
  }
  return f.finish();
}

}  // namespace homsim
