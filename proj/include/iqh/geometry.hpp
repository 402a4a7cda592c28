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

#include <span>
#include <string_view>
#include <vector>

namespace iqh::geom {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Rings are stored open: the closing vertex of a GeoJSON ring is dropped.
using Ring = std::vector<Point>;

struct Polygon {
  Ring outer;
  std::vector<Ring> holes;
  friend bool operator==(const Polygon&, const Polygon&) = default;
};

using MultiPolygon = std::vector<Polygon>;

enum class Issue {
  kNone,
  kNonFinite,
  kTooFewPoints,
  kDuplicateVertex,
  kZeroArea,
  kSelfIntersection,
  kWrongOrientation,
  kHoleOutsideShell,
  kOverlappingParts,
};

std::string_view to_string(Issue issue) noexcept;

/// Shoelace signed area; positive for counter-clockwise rings.
double signed_area(std::span<const Point> ring) noexcept;

double ring_length(std::span<const Point> ring) noexcept;

/// True when no ring carries any coordinate.
bool is_empty(const MultiPolygon& mp) noexcept;

/// First validity problem found, or kNone. Shells must be counter-clockwise and
/// holes clockwise; rings may touch other rings at isolated points but never
/// cross or overlap, and a ring may not touch itself.
Issue find_issue(const MultiPolygon& mp);

/// Zero-width-buffer style repair: splits every ring segment at all mutual
/// intersections, cancels coincident edges pairwise and re-polygonises the
/// planar arrangement, keeping the faces that are inside under the even-odd
/// rule. The result is valid per find_issue and covers the same even-odd area.
MultiPolygon repair_even_odd(const MultiPolygon& mp);

/// Even-odd membership of `p` with respect to all rings of `mp`.
bool even_odd_contains(const MultiPolygon& mp, Point p) noexcept;

std::vector<Point> vertices(const MultiPolygon& mp);

/// Counter-clockwise convex hull without collinear points (Andrew's monotone chain).
std::vector<Point> convex_hull(std::span<const Point> points);

struct AxisBox {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;
  double width() const noexcept { return max_x - min_x; }
  double height() const noexcept { return max_y - min_y; }
};

AxisBox envelope(std::span<const Point> points) noexcept;

// Rotated rectangle; w is the long side and angle (degrees, [0, 180)) is the
// direction of the long side against the x axis. Squares report the angle
// modulo 90.
struct RotatedRect {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  double angle_deg = 0.0;
  double area() const noexcept { return w * h; }
};

/// Minimum-area enclosing rectangle by rotating calipers over the hull.
/// Throws Error(kDegenerateGeometry) when the points are collinear.
RotatedRect min_area_rect(std::span<const Point> points);

struct Descriptors {
  double area = 0.0;
  Point centroid;
  double perimeter = 0.0;
  double compactness = 0.0;  // 4*pi*A / P^2
};

/// Throws Error(kDegenerateGeometry) for zero area.
Descriptors describe(const MultiPolygon& mp);

}  // namespace iqh::geom
