// Copyright 2026 The bqkd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace bqkd::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Options {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Round tick positions covering [lo, hi].
inline std::vector<double> ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  return t;
}

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  return palette[i % 6];
}

}  // namespace detail

/// Static SVG line chart; non-finite points break the line.
inline std::string line_chart(const std::vector<Series>& series, const Options& opt) {
  const double w = 640, h = 420, left = 80, right = 20, top = 40, bottom = 60;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto ty = [&](double v) { return opt.log_y ? std::log10(v) : v; };
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double yv = ty(s.y[i]);
      if (!std::isfinite(s.x[i]) || !std::isfinite(yv)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, yv);
      y1 = std::max(y1, yv);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5 * std::max(1.0, std::abs(y0)), y1 += 0.5 * std::max(1.0, std::abs(y1));
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double v) { return left + (v - x0) / (x1 - x0) * (w - left - right); };
  auto py = [&](double v) { return h - bottom - (v - y0) / (y1 - y0) * (h - top - bottom); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << detail::escape(opt.title) << "</text>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w - left - right << "\" height=\"" << h - top - bottom
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : detail::ticks(x0, x1)) {
    o << "<line x1=\"" << px(t) << "\" y1=\"" << h - bottom << "\" x2=\"" << px(t) << "\" y2=\"" << h - bottom + 5
      << "\" stroke=\"black\"/>";
    o << "<text x=\"" << px(t) << "\" y=\"" << h - bottom + 18 << "\" text-anchor=\"middle\">" << detail::fmt(t) << "</text>\n";
  }
  for (double t : detail::ticks(y0, y1)) {
    o << "<line x1=\"" << left - 5 << "\" y1=\"" << py(t) << "\" x2=\"" << left << "\" y2=\"" << py(t) << "\" stroke=\"black\"/>";
    o << "<text x=\"" << left - 8 << "\" y=\"" << py(t) + 4 << "\" text-anchor=\"end\">"
      << (opt.log_y ? "1e" + detail::fmt(t) : detail::fmt(t)) << "</text>\n";
  }
  o << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 15 << "\" text-anchor=\"middle\">" << detail::escape(opt.x_label)
    << "</text>\n";
  o << "<text transform=\"translate(18," << (top + h - bottom) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << detail::escape(opt.y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::string path;
    bool pen = false;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double yv = ty(s.y[i]);
      if (!std::isfinite(s.x[i]) || !std::isfinite(yv)) {
        pen = false;
        continue;
      }
      path += (pen ? " L" : " M") + detail::fmt(px(s.x[i])) + " " + detail::fmt(py(yv));
      pen = true;
      o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(yv) << "\" r=\"2.5\" fill=\"" << detail::color(k) << "\"/>";
    }
    o << "\n<path d=\"" << path << "\" fill=\"none\" stroke=\"" << detail::color(k) << "\" stroke-width=\"1.5\"/>\n";
    o << "<text x=\"" << w - right - 10 << "\" y=\"" << top + 16 + 16 * k << "\" text-anchor=\"end\" fill=\"" << detail::color(k)
      << "\">" << detail::escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Static SVG bar chart with one bar per label.
inline std::string bar_chart(const std::vector<std::string>& labels, const std::vector<double>& values, const Options& opt) {
  const double w = 640, h = 420, left = 80, right = 20, top = 40, bottom = 60;
  double hi = 0.0;
  for (double v : values)
    if (std::isfinite(v)) hi = std::max(hi, v);
  if (hi <= 0.0) hi = 1.0;
  hi *= 1.05;
  const double slot = (w - left - right) / static_cast<double>(std::max<std::size_t>(1, labels.size()));
  auto py = [&](double v) { return h - bottom - v / hi * (h - top - bottom); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << detail::escape(opt.title) << "</text>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom << "\" stroke=\"black\"/>\n";
  for (double t : detail::ticks(0.0, hi))
    o << "<text x=\"" << left - 8 << "\" y=\"" << py(t) + 4 << "\" text-anchor=\"end\">" << detail::fmt(t) << "</text>\n";
  o << "<text transform=\"translate(18," << (top + h - bottom) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << detail::escape(opt.y_label) << "</text>\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double v = i < values.size() && std::isfinite(values[i]) ? values[i] : 0.0;
    const double x = left + slot * (static_cast<double>(i) + 0.15);
    o << "<rect x=\"" << x << "\" y=\"" << py(v) << "\" width=\"" << 0.7 * slot << "\" height=\"" << h - bottom - py(v)
      << "\" fill=\"" << detail::color(0) << "\"/>";
    o << "<text x=\"" << x + 0.35 * slot << "\" y=\"" << h - bottom + 18 << "\" text-anchor=\"middle\">" << detail::escape(labels[i])
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace bqkd::plot
