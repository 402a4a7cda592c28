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

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Minimal static SVG charts for reports.
namespace iqh::svg {

std::string escape(std::string_view text);

struct Bar {
  std::string label;
  double value = 0.0;
};

std::string bar_chart(std::string_view title, const std::vector<Bar>& bars, std::string_view x_label,
                      std::string_view y_label);

struct Marker {
  double x = 0.0;
  double y = 0.0;
  // Whisker extent; drawn when lo < hi.
  double lo = 0.0;
  double hi = 0.0;
  std::string x_text;  // value written to data-x
};

struct Series {
  std::string name;
  std::vector<Marker> markers;
  bool connect = false;  // polyline through the markers in order
};

/// Scatter plot with optional min-max whiskers. Each marker is a <circle> with
/// data-x / data-y attributes. `x_ticks` (position, label) replaces numeric
/// ticks for categorical axes.
std::string scatter_plot(std::string_view title, std::string_view x_label, std::string_view y_label,
                         const std::vector<Series>& series,
                         const std::optional<std::vector<std::pair<double, std::string>>>& x_ticks = std::nullopt);

}  // namespace iqh::svg
