// Copyright 2026 The iqh Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "iqh/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>

#include "iqh/util.hpp"

namespace iqh::svg {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 70.0;

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

std::string header(std::string_view title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{3}</text>\n",
      kWidth, kHeight, kWidth / 2, escape(title));
}

std::string axis_labels(std::string_view x_label, std::string_view y_label) {
  return fmt::format(
      "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n"
      "<line x1=\"{0}\" y1=\"{3}\" x2=\"{0}\" y2=\"{1}\" stroke=\"black\"/>\n"
      "<text x=\"{4}\" y=\"{5}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{6}</text>\n"
      "<text x=\"16\" y=\"{7}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      "transform=\"rotate(-90 16 {7})\">{8}</text>\n",
      kLeft, kHeight - kBottom, kWidth - kRight, kTop, (kLeft + kWidth - kRight) / 2, kHeight - 12, escape(x_label),
      (kTop + kHeight - kBottom) / 2, escape(y_label));
}

std::string fmt_tick(double v) {
  if (v != 0.0 && (std::abs(v) >= 1e5 || std::abs(v) < 1e-3)) return fmt::format("{:.2e}", v);
  return fmt::format("{:.4g}", v);
}

}  // namespace

std::string escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string bar_chart(std::string_view title, const std::vector<Bar>& bars, std::string_view x_label,
                      std::string_view y_label) {
  std::string out = header(title);
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  double max_v = 0.0;
  for (const auto& b : bars) max_v = std::max(max_v, b.value);
  if (max_v <= 0.0) max_v = 1.0;
  const double slot = bars.empty() ? plot_w : plot_w / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double h = plot_h * bars[i].value / max_v;
    const double x = kLeft + slot * static_cast<double>(i);
    out += fmt::format(
        "<rect class=\"bar\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\" "
        "data-label=\"{}\" data-value=\"{}\"/>\n",
        x + slot * 0.1, kTop + plot_h - h, slot * 0.8, h, kPalette[0], escape(bars[i].label),
        format_double(bars[i].value));
    const double tx = x + slot / 2;
    const double ty = kHeight - kBottom + 12;
    out += fmt::format(
        "<text x=\"{0:.2f}\" y=\"{1:.2f}\" font-family=\"sans-serif\" font-size=\"9\" text-anchor=\"end\" "
        "transform=\"rotate(-45 {0:.2f} {1:.2f})\">{2}</text>\n",
        tx, ty, escape(bars[i].label));
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = max_v * k / 4.0;
    const double y = kTop + plot_h - plot_h * k / 4.0;
    out += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
        kLeft - 6, y + 3, fmt_tick(v));
  }
  out += axis_labels(x_label, y_label);
  out += "</svg>\n";
  return out;
}

std::string scatter_plot(std::string_view title, std::string_view x_label, std::string_view y_label,
                         const std::vector<Series>& series,
                         const std::optional<std::vector<std::pair<double, std::string>>>& x_ticks) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (const auto& m : s.markers) {
      x0 = std::min(x0, m.x);
      x1 = std::max(x1, m.x);
      y0 = std::min({y0, m.y, m.lo < m.hi ? m.lo : m.y});
      y1 = std::max({y1, m.y, m.lo < m.hi ? m.hi : m.y});
    }
  }
  if (!(x0 <= x1)) x0 = 0.0, x1 = 1.0;
  if (!(y0 <= y1)) y0 = 0.0, y1 = 1.0;
  if (x0 == x1) x0 -= 0.5, x1 += 0.5;
  if (y0 == y1) y0 -= 0.5, y1 += 0.5;
  const double pad_x = (x1 - x0) * 0.05, pad_y = (y1 - y0) * 0.05;
  x0 -= pad_x, x1 += pad_x, y0 -= pad_y, y1 += pad_y;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * plot_w; };
  auto py = [&](double y) { return kTop + plot_h - (y - y0) / (y1 - y0) * plot_h; };

  std::string out = header(title);
  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = kPalette[si % std::size(kPalette)];
    out += fmt::format("<g class=\"series\" data-name=\"{}\">\n", escape(series[si].name));
    if (series[si].connect && series[si].markers.size() > 1) {
      std::string pts;
      for (const auto& m : series[si].markers) pts += fmt::format("{:.2f},{:.2f} ", px(m.x), py(m.y));
      pts.pop_back();
      out += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\"/>\n", pts, color);
    }
    for (const auto& m : series[si].markers) {
      if (m.lo < m.hi) {
        out += fmt::format(
            "<line class=\"whisker\" x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"{3}\"/>\n",
            px(m.x), py(m.lo), py(m.hi), color);
      }
      out += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"4\" fill=\"{}\" data-x=\"{}\" data-y=\"{}\"/>\n",
                         px(m.x), py(m.y), color, escape(m.x_text.empty() ? format_double(m.x) : m.x_text),
                         format_double(m.y));
    }
    out += "</g>\n";
    out += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>\n",
        kWidth - kRight - 120, kTop + 14.0 * static_cast<double>(si + 1), color, escape(series[si].name));
  }
  if (x_ticks) {
    for (const auto& [pos, label] : *x_ticks) {
      out += fmt::format(
          "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" "
          "text-anchor=\"middle\">{}</text>\n",
          px(pos), kHeight - kBottom + 14, escape(label));
    }
  } else {
    for (int k = 0; k <= 4; ++k) {
      const double v = x0 + (x1 - x0) * k / 4.0;
      out += fmt::format(
          "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" "
          "text-anchor=\"middle\">{}</text>\n",
          px(v), kHeight - kBottom + 14, fmt_tick(v));
    }
  }
  for (int k = 0; k <= 4; ++k) {
    const double v = y0 + (y1 - y0) * k / 4.0;
    out += fmt::format(
        "<text x=\"{:.2f}\" y=\"{:.2f}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
        kLeft - 6, py(v) + 3, fmt_tick(v));
  }
  out += axis_labels(x_label, y_label);
  out += "</svg>\n";
  return out;
}

}  // namespace iqh::svg
