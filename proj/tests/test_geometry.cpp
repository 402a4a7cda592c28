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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "iqh/error.hpp"
#include "iqh/geometry.hpp"

using namespace iqh;
using namespace iqh::geom;

namespace {

std::vector<std::pair<Point, Point>> edges_of(const MultiPolygon& mp) {
  std::vector<std::pair<Point, Point>> e;
  for (const auto& poly : mp) {
    auto add = [&](const Ring& r) {
      for (std::size_t i = 0; i < r.size(); ++i) e.emplace_back(r[i], r[(i + 1) % r.size()]);
    };
    add(poly.outer);
    for (const auto& h : poly.holes) add(h);
  }
  return e;
}

// Even-odd area by vertical slabs. Between consecutive breakpoints (vertex
// abscissae and edge crossings) the covered length is linear in x, so the
// midpoint rule is exact per slab.
double slab_area(const MultiPolygon& mp) {
  const auto edges = edges_of(mp);
  std::vector<double> xs;
  for (const auto& [a, b] : edges) xs.push_back(a.x);
  for (std::size_t i = 0; i < edges.size(); ++i)
    for (std::size_t j = i + 1; j < edges.size(); ++j) {
      const auto [p, p2] = edges[i];
      const auto [q, q2] = edges[j];
      const double rx = p2.x - p.x, ry = p2.y - p.y, sx = q2.x - q.x, sy = q2.y - q.y;
      const double den = rx * sy - ry * sx;
      if (std::abs(den) < 1e-15) continue;
      const double t = ((q.x - p.x) * sy - (q.y - p.y) * sx) / den;
      const double u = ((q.x - p.x) * ry - (q.y - p.y) * rx) / den;
      if (t >= 0 && t <= 1 && u >= 0 && u <= 1) xs.push_back(p.x + t * rx);
    }
  std::sort(xs.begin(), xs.end());
  double area = 0.0;
  for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
    const double w = xs[k + 1] - xs[k];
    if (w <= 0) continue;
    const double xm = 0.5 * (xs[k] + xs[k + 1]);
    std::vector<double> ys;
    for (const auto& [a, b] : edges) {
      if ((a.x <= xm) == (b.x <= xm)) continue;
      ys.push_back(a.y + (xm - a.x) / (b.x - a.x) * (b.y - a.y));
    }
    std::sort(ys.begin(), ys.end());
    for (std::size_t i = 0; i + 1 < ys.size(); i += 2) area += w * (ys[i + 1] - ys[i]);
  }
  return area;
}

double area_of(const MultiPolygon& mp) {
  double a = 0.0;
  for (const auto& p : mp) {
    a += signed_area(p.outer);
    for (const auto& h : p.holes) a += signed_area(h);
  }
  return a;
}

// Smallest bounding-box area over every direction spanned by two points.
// The optimum has a side along a hull edge, which is one of these directions.
double brute_min_rect_area(const std::vector<Point>& pts) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j) {
      const double dx = pts[j].x - pts[i].x, dy = pts[j].y - pts[i].y;
      const double len = std::hypot(dx, dy);
      if (len < 1e-12) continue;
      const double ux = dx / len, uy = dy / len;
      double lo_u = 1e300, hi_u = -1e300, lo_v = 1e300, hi_v = -1e300;
      for (const auto& p : pts) {
        const double u = p.x * ux + p.y * uy, v = -p.x * uy + p.y * ux;
        lo_u = std::min(lo_u, u), hi_u = std::max(hi_u, u), lo_v = std::min(lo_v, v), hi_v = std::max(hi_v, v);
      }
      best = std::min(best, (hi_u - lo_u) * (hi_v - lo_v));
    }
  return best;
}

}  // namespace

TEST(Geometry, SquareIsValid) {
  const MultiPolygon sq{{{{0, 0}, {2, 0}, {2, 2}, {0, 2}}, {}}};
  EXPECT_EQ(find_issue(sq), Issue::kNone);
  EXPECT_DOUBLE_EQ(area_of(sq), 4.0);
  EXPECT_DOUBLE_EQ(slab_area(sq), 4.0);
}

TEST(Geometry, BowTieRepairKeepsEvenOddArea) {
  const MultiPolygon bow{{{{0, 0}, {4, 4}, {4, 0}, {0, 4}}, {}}};
  EXPECT_EQ(find_issue(bow), Issue::kSelfIntersection);
  const auto fixed = repair_even_odd(bow);
  EXPECT_EQ(find_issue(fixed), Issue::kNone);
  EXPECT_EQ(fixed.size(), 2u);
  EXPECT_NEAR(area_of(fixed), 8.0, 1e-12);
  EXPECT_NEAR(slab_area(bow), 8.0, 1e-12);
}

TEST(Geometry, WrongOrientationAndHoles) {
  const MultiPolygon cw{{{{0, 0}, {0, 2}, {2, 2}, {2, 0}}, {}}};
  EXPECT_EQ(find_issue(cw), Issue::kWrongOrientation);
  const MultiPolygon holed{{{{0, 0}, {10, 0}, {10, 10}, {0, 10}}, {{{2, 2}, {2, 4}, {4, 4}, {4, 2}}}}};
  EXPECT_EQ(find_issue(holed), Issue::kNone);
  EXPECT_NEAR(slab_area(holed), 96.0, 1e-12);
  EXPECT_NEAR(area_of(holed), 96.0, 1e-12);
}

// Property: repair yields a valid shape covering the even-odd area of any
// random (usually self-intersecting) ring.
TEST(GeometryProperty, RepairOfRandomRings) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(0.0, 10.0);
  std::uniform_int_distribution<int> count(4, 8);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Ring r(static_cast<std::size_t>(count(rng)));
    for (auto& p : r) p = {coord(rng), coord(rng)};
    const MultiPolygon mp{{r, {}}};
    const double expected = slab_area(mp);
    if (expected < 1e-6) continue;
    const auto fixed = repair_even_odd(mp);
    ASSERT_EQ(find_issue(fixed), Issue::kNone) << "trial " << trial;
    EXPECT_NEAR(area_of(fixed), expected, 1e-7 * std::max(1.0, expected)) << "trial " << trial;
    std::uniform_real_distribution<double> probe(0.0, 10.0);
    for (int k = 0; k < 20; ++k) {
      const Point p{probe(rng), probe(rng)};
      EXPECT_EQ(even_odd_contains(fixed, p), even_odd_contains(mp, p));
    }
    ++checked;
  }
  EXPECT_GT(checked, 150);
}

TEST(GeometryProperty, MinAreaRectMatchesDirectionSweep) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Point> pts(3 + trial % 12);
    for (auto& p : pts) p = {g(rng) + 0.5 * g(rng), 0.4 * g(rng)};
    const auto rect = min_area_rect(pts);
    EXPECT_NEAR(rect.area(), brute_min_rect_area(pts), 1e-9 * std::max(1.0, rect.area()));
    EXPECT_GE(rect.w, rect.h);
    EXPECT_GE(rect.angle_deg, 0.0);
    EXPECT_LT(rect.angle_deg, 180.0);
    // Every point lies inside the rectangle.
    const double a = rect.angle_deg * M_PI / 180.0;
    for (const auto& p : pts) {
      const double dx = p.x - rect.cx, dy = p.y - rect.cy;
      EXPECT_LE(std::abs(dx * std::cos(a) + dy * std::sin(a)), rect.w / 2 + 1e-9);
      EXPECT_LE(std::abs(-dx * std::sin(a) + dy * std::cos(a)), rect.h / 2 + 1e-9);
    }
  }
}

TEST(Geometry, MinAreaRectOfRotatedRectangle) {
  const double a = 30.0 * M_PI / 180.0;
  std::vector<Point> pts;
  for (auto [u, v] : {std::pair{-3.0, -1.0}, {3.0, -1.0}, {3.0, 1.0}, {-3.0, 1.0}})
    pts.push_back({5 + u * std::cos(a) - v * std::sin(a), 7 + u * std::sin(a) + v * std::cos(a)});
  const auto r = min_area_rect(pts);
  EXPECT_NEAR(r.w, 6.0, 1e-9);
  EXPECT_NEAR(r.h, 2.0, 1e-9);
  EXPECT_NEAR(r.angle_deg, 30.0, 1e-7);
  EXPECT_NEAR(r.cx, 5.0, 1e-9);
  EXPECT_NEAR(r.cy, 7.0, 1e-9);
}

TEST(Geometry, CollinearPointsAreDegenerate) {
  const std::vector<Point> line{{0, 0}, {1, 1}, {2, 2}};
  try {
    min_area_rect(line);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kDegenerateGeometry);
  }
}

TEST(GeometryProperty, HullContainsAllPoints) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> c(-5, 5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Point> pts(20);
    for (auto& p : pts) p = {c(rng), c(rng)};
    const auto hull = convex_hull(pts);
    ASSERT_GE(hull.size(), 3u);
    EXPECT_GT(signed_area(hull), 0.0);
    for (std::size_t i = 0; i < hull.size(); ++i) {
      const Point a = hull[i], b = hull[(i + 1) % hull.size()];
      for (const auto& p : pts) EXPECT_GE((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x), -1e-9);
    }
  }
}

TEST(Geometry, DescribeSquare) {
  const MultiPolygon sq{{{{0, 0}, {2, 0}, {2, 2}, {0, 2}}, {}}};
  const auto d = describe(sq);
  EXPECT_DOUBLE_EQ(d.area, 4.0);
  EXPECT_DOUBLE_EQ(d.perimeter, 8.0);
  EXPECT_NEAR(d.centroid.x, 1.0, 1e-12);
  EXPECT_NEAR(d.compactness, M_PI / 4, 1e-12);
}
