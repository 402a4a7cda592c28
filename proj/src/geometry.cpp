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

#include "iqh/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <unordered_map>
#include <utility>

#include "iqh/error.hpp"

namespace iqh::geom {

namespace {

Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
Point operator*(Point a, double s) { return {a.x * s, a.y * s}; }
double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }
double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
double norm(Point a) { return std::hypot(a.x, a.y); }

struct Segment {
  Point a;
  Point b;
  int ring = 0;    // global ring index
  int index = 0;   // position within the ring
};

struct RingRef {
  const Ring* ring;
  int part;
  bool hole;
};

std::vector<RingRef> collect_rings(const MultiPolygon& mp) {
  std::vector<RingRef> out;
  for (std::size_t p = 0; p < mp.size(); ++p) {
    out.push_back({&mp[p].outer, static_cast<int>(p), false});
    for (const auto& h : mp[p].holes) out.push_back({&h, static_cast<int>(p), true});
  }
  return out;
}

double scale_of(const MultiPolygon& mp) {
  double s = 1.0;
  for (const auto& poly : mp) {
    for (const auto& p : poly.outer) s = std::max({s, std::abs(p.x), std::abs(p.y)});
    for (const auto& h : poly.holes)
      for (const auto& p : h) s = std::max({s, std::abs(p.x), std::abs(p.y)});
  }
  return s;
}

double point_segment_distance(Point p, Point a, Point b) {
  Point ab = b - a;
  double len2 = dot(ab, ab);
  double t = len2 > 0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return norm(p - (a + ab * t));
}

enum class Contact { kNone, kPoint, kProper, kOverlap };

// Classifies how two closed segments meet, with tolerance `eps`.
Contact classify(Point p1, Point p2, Point q1, Point q2, double eps) {
  Point r = p2 - p1;
  Point s = q2 - q1;
  double rl = norm(r), sl = norm(s);
  double d1 = cross(r, q1 - p1), d2 = cross(r, q2 - p1);
  double d3 = cross(s, p1 - q1), d4 = cross(s, p2 - q1);
  const double tol_r = eps * rl, tol_s = eps * sl;
  auto sgn = [](double v, double tol) { return v > tol ? 1 : (v < -tol ? -1 : 0); };
  int o1 = sgn(d1, tol_r), o2 = sgn(d2, tol_r), o3 = sgn(d3, tol_s), o4 = sgn(d4, tol_s);
  if (o1 * o2 < 0 && o3 * o4 < 0) return Contact::kProper;
  if (o1 == 0 && o2 == 0) {
    // Collinear: compare extents along r.
    if (rl == 0) return point_segment_distance(p1, q1, q2) <= eps ? Contact::kPoint : Contact::kNone;
    double t0 = dot(q1 - p1, r) / (rl * rl), t1 = dot(q2 - p1, r) / (rl * rl);
    if (t0 > t1) std::swap(t0, t1);
    double lo = std::max(0.0, t0), hi = std::min(1.0, t1);
    double overlap = (hi - lo) * rl;
    if (overlap > eps) return Contact::kOverlap;
    if (overlap >= -eps) return Contact::kPoint;
    return Contact::kNone;
  }
  if (point_segment_distance(q1, p1, p2) <= eps || point_segment_distance(q2, p1, p2) <= eps ||
      point_segment_distance(p1, q1, q2) <= eps || point_segment_distance(p2, q1, q2) <= eps) {
    return Contact::kPoint;
  }
  return Contact::kNone;
}

bool ring_contains(std::span<const Point> ring, Point p) noexcept {
  bool inside = false;
  const std::size_t n = ring.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point a = ring[i], b = ring[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x) inside = !inside;
    }
  }
  return inside;
}

bool on_ring_boundary(std::span<const Point> ring, Point p, double eps) {
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (point_segment_distance(p, ring[i], ring[(i + 1) % n]) <= eps) return true;
  }
  return false;
}

// A vertex of `inner` that is not on the boundary of `outer`, if any.
const Point* free_vertex(const Ring& inner, const Ring& outer, double eps) {
  for (const auto& p : inner)
    if (!on_ring_boundary(outer, p, eps)) return &p;
  return nullptr;
}

}  // namespace

std::string_view to_string(Issue issue) noexcept {
  switch (issue) {
    case Issue::kNone: return "none";
    case Issue::kNonFinite: return "non-finite-coordinate";
    case Issue::kTooFewPoints: return "too-few-points";
    case Issue::kDuplicateVertex: return "duplicate-vertex";
    case Issue::kZeroArea: return "zero-area";
    case Issue::kSelfIntersection: return "self-intersection";
    case Issue::kWrongOrientation: return "wrong-orientation";
    case Issue::kHoleOutsideShell: return "hole-outside-shell";
    case Issue::kOverlappingParts: return "overlapping-parts";
  }
  return "unknown";
}

double signed_area(std::span<const Point> ring) noexcept {
  const std::size_t n = ring.size();
  if (n < 3) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point a = ring[i], b = ring[(i + 1) % n];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

double ring_length(std::span<const Point> ring) noexcept {
  const std::size_t n = ring.size();
  if (n < 2) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += norm(ring[(i + 1) % n] - ring[i]);
  return s;
}

bool is_empty(const MultiPolygon& mp) noexcept {
  for (const auto& poly : mp) {
    if (!poly.outer.empty()) return false;
    for (const auto& h : poly.holes)
      if (!h.empty()) return false;
  }
  return true;
}

std::vector<Point> vertices(const MultiPolygon& mp) {
  std::vector<Point> out;
  for (const auto& poly : mp) {
    out.insert(out.end(), poly.outer.begin(), poly.outer.end());
    for (const auto& h : poly.holes) out.insert(out.end(), h.begin(), h.end());
  }
  return out;
}

Issue find_issue(const MultiPolygon& mp) {
  if (mp.empty()) return Issue::kTooFewPoints;
  const double eps = 1e-12 * scale_of(mp);
  const auto rings = collect_rings(mp);

  for (const auto& rr : rings) {
    for (const auto& p : *rr.ring)
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) return Issue::kNonFinite;
  }
  for (const auto& rr : rings) {
    const Ring& r = *rr.ring;
    if (r.size() < 3) return Issue::kTooFewPoints;
    for (std::size_t i = 0; i < r.size(); ++i)
      if (norm(r[(i + 1) % r.size()] - r[i]) <= eps) return Issue::kDuplicateVertex;
  }
  for (const auto& rr : rings) {
    // A figure-eight also nets zero area; that one is reported as a crossing.
    const double a = signed_area(*rr.ring);
    if (std::abs(a) <= eps * eps && convex_hull(*rr.ring).size() < 3) return Issue::kZeroArea;
  }

  std::vector<Segment> segs;
  for (std::size_t r = 0; r < rings.size(); ++r) {
    const Ring& ring = *rings[r].ring;
    for (std::size_t i = 0; i < ring.size(); ++i)
      segs.push_back({ring[i], ring[(i + 1) % ring.size()], static_cast<int>(r), static_cast<int>(i)});
  }
  std::sort(segs.begin(), segs.end(), [](const Segment& s, const Segment& t) {
    return std::min(s.a.x, s.b.x) < std::min(t.a.x, t.b.x);
  });
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const double max_x = std::max(segs[i].a.x, segs[i].b.x) + eps;
    for (std::size_t j = i + 1; j < segs.size(); ++j) {
      if (std::min(segs[j].a.x, segs[j].b.x) > max_x) break;
      const Segment& s = segs[i];
      const Segment& t = segs[j];
      const Contact c = classify(s.a, s.b, t.a, t.b, eps);
      if (c == Contact::kNone) continue;
      if (s.ring == t.ring) {
        const int n = static_cast<int>(rings[static_cast<std::size_t>(s.ring)].ring->size());
        const bool adjacent = (s.index + 1) % n == t.index || (t.index + 1) % n == s.index;
        if (adjacent) {
          if (c == Contact::kOverlap || c == Contact::kProper) return Issue::kSelfIntersection;
          continue;
        }
        return Issue::kSelfIntersection;
      }
      if (c == Contact::kProper || c == Contact::kOverlap) return Issue::kSelfIntersection;
    }
  }

  for (const auto& rr : rings) {
    const double a = signed_area(*rr.ring);
    if ((!rr.hole && a < 0) || (rr.hole && a > 0)) return Issue::kWrongOrientation;
  }

  for (const auto& poly : mp) {
    for (std::size_t h = 0; h < poly.holes.size(); ++h) {
      const Point* v = free_vertex(poly.holes[h], poly.outer, eps);
      if (v && !ring_contains(poly.outer, *v)) return Issue::kHoleOutsideShell;
      for (std::size_t k = 0; k < poly.holes.size(); ++k) {
        if (k == h) continue;
        const Point* w = free_vertex(poly.holes[h], poly.holes[k], eps);
        if (w && ring_contains(poly.holes[k], *w)) return Issue::kHoleOutsideShell;
      }
    }
  }

  for (std::size_t i = 0; i < mp.size(); ++i) {
    for (std::size_t j = 0; j < mp.size(); ++j) {
      if (i == j) continue;
      const Point* v = free_vertex(mp[i].outer, mp[j].outer, eps);
      if (!v) return Issue::kOverlappingParts;
      if (!ring_contains(mp[j].outer, *v)) continue;
      bool in_hole = false;
      for (const auto& h : mp[j].holes)
        if (ring_contains(h, *v) || on_ring_boundary(h, *v, eps)) in_hole = true;
      if (!in_hole) return Issue::kOverlappingParts;
    }
  }
  return Issue::kNone;
}

bool even_odd_contains(const MultiPolygon& mp, Point p) noexcept {
  bool inside = false;
  for (const auto& poly : mp) {
    if (poly.outer.size() >= 3 && ring_contains(poly.outer, p)) inside = !inside;
    for (const auto& h : poly.holes)
      if (h.size() >= 3 && ring_contains(h, p)) inside = !inside;
  }
  return inside;
}

namespace {

// Planar arrangement of a set of segments with snapped nodes.
class Arrangement {
 public:
  explicit Arrangement(double tol) : tol_(tol), cell_(tol * 4.0) {}

  int node(Point p) {
    const long long cx = static_cast<long long>(std::floor(p.x / cell_));
    const long long cy = static_cast<long long>(std::floor(p.y / cell_));
    for (long long dx = -1; dx <= 1; ++dx) {
      for (long long dy = -1; dy <= 1; ++dy) {
        auto it = grid_.find(key(cx + dx, cy + dy));
        if (it == grid_.end()) continue;
        for (int id : it->second)
          if (norm(nodes_[static_cast<std::size_t>(id)] - p) <= tol_) return id;
      }
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(p);
    grid_[key(cx, cy)].push_back(id);
    return id;
  }

  void add_edge(int a, int b) {
    if (a == b) return;
    auto k = std::minmax(a, b);
    edge_count_[{k.first, k.second}] ^= 1;
  }

  const std::vector<Point>& nodes() const { return nodes_; }

  std::vector<std::pair<int, int>> odd_edges() const {
    std::vector<std::pair<int, int>> out;
    for (const auto& [e, parity] : edge_count_)
      if (parity) out.push_back(e);
    return out;
  }

 private:
  static long long key(long long x, long long y) { return x * 73856093LL ^ y * 19349663LL; }

  double tol_;
  double cell_;
  std::vector<Point> nodes_;
  std::unordered_map<long long, std::vector<int>> grid_;
  std::map<std::pair<int, int>, int> edge_count_;
};

double cycle_area(const std::vector<Point>& pts, const std::vector<int>& cycle) {
  double s = 0.0;
  const std::size_t n = cycle.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point a = pts[static_cast<std::size_t>(cycle[i])];
    const Point b = pts[static_cast<std::size_t>(cycle[(i + 1) % n])];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * s;
}

// Splits a closed walk that revisits nodes into simple loops.
std::vector<std::vector<int>> split_simple(const std::vector<int>& cycle) {
  std::vector<std::vector<int>> loops;
  std::vector<int> path;
  std::unordered_map<int, std::size_t> pos;
  for (int n : cycle) {
    auto it = pos.find(n);
    if (it != pos.end()) {
      std::vector<int> loop(path.begin() + static_cast<std::ptrdiff_t>(it->second), path.end());
      for (std::size_t k = it->second + 1; k < path.size(); ++k) pos.erase(path[k]);
      path.resize(it->second + 1);
      if (loop.size() >= 3) loops.push_back(std::move(loop));
    } else {
      pos[n] = path.size();
      path.push_back(n);
    }
  }
  if (path.size() >= 3) loops.push_back(std::move(path));
  return loops;
}

}  // namespace

MultiPolygon repair_even_odd(const MultiPolygon& mp) {
  std::vector<Segment> segs;
  {
    const auto rings = collect_rings(mp);
    for (std::size_t r = 0; r < rings.size(); ++r) {
      const Ring& ring = *rings[r].ring;
      if (ring.size() < 2) continue;
      for (std::size_t i = 0; i < ring.size(); ++i) {
        const Point a = ring[i], b = ring[(i + 1) % ring.size()];
        if (!std::isfinite(a.x) || !std::isfinite(a.y) || !std::isfinite(b.x) || !std::isfinite(b.y)) {
          return {};
        }
        segs.push_back({a, b, static_cast<int>(r), static_cast<int>(i)});
      }
    }
  }
  const double tol = 1e-9 * scale_of(mp);

  // Split parameters per segment.
  std::vector<std::vector<double>> splits(segs.size(), std::vector<double>{0.0, 1.0});
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const Point p1 = segs[i].a, r = segs[i].b - segs[i].a;
    const double rl2 = dot(r, r);
    if (rl2 <= tol * tol) continue;
    for (std::size_t j = i + 1; j < segs.size(); ++j) {
      const Point q1 = segs[j].a, s = segs[j].b - segs[j].a;
      const double sl2 = dot(s, s);
      if (sl2 <= tol * tol) continue;
      const double denom = cross(r, s);
      const Point qp = q1 - p1;
      if (std::abs(denom) > 1e-14 * std::sqrt(rl2 * sl2)) {
        const double t = cross(qp, s) / denom;
        const double u = cross(qp, r) / denom;
        const double et = tol / std::sqrt(rl2), eu = tol / std::sqrt(sl2);
        if (t >= -et && t <= 1 + et && u >= -eu && u <= 1 + eu) {
          splits[i].push_back(std::clamp(t, 0.0, 1.0));
          splits[j].push_back(std::clamp(u, 0.0, 1.0));
        }
      } else if (std::abs(cross(qp, r)) <= tol * std::sqrt(rl2)) {
        // Collinear: each segment is split at the other's endpoints.
        auto project = [](Point o, Point d, double d2, Point x) { return dot(x - o, d) / d2; };
        for (Point e : {segs[j].a, segs[j].b}) {
          double t = project(p1, r, rl2, e);
          if (t > 0 && t < 1) splits[i].push_back(t);
        }
        for (Point e : {segs[i].a, segs[i].b}) {
          double u = project(q1, s, sl2, e);
          if (u > 0 && u < 1) splits[j].push_back(u);
        }
      }
    }
  }

  Arrangement arr(tol);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    auto& ts = splits[i];
    std::sort(ts.begin(), ts.end());
    int prev = -1;
    for (double t : ts) {
      const Point p = segs[i].a + (segs[i].b - segs[i].a) * t;
      const int id = arr.node(p);
      if (prev >= 0) arr.add_edge(prev, id);
      prev = id;
    }
  }
  const auto& pts = arr.nodes();
  const auto edges = arr.odd_edges();
  if (edges.empty()) return {};

  // Half-edge graph: out[v] sorted counter-clockwise by angle.
  struct Half {
    int from, to;
  };
  std::vector<Half> halves;
  std::vector<std::vector<int>> out(pts.size());
  for (const auto& [a, b] : edges) {
    out[static_cast<std::size_t>(a)].push_back(static_cast<int>(halves.size()));
    halves.push_back({a, b});
    out[static_cast<std::size_t>(b)].push_back(static_cast<int>(halves.size()));
    halves.push_back({b, a});
  }
  std::vector<int> pos_in_out(halves.size());
  for (std::size_t v = 0; v < out.size(); ++v) {
    auto& list = out[v];
    std::sort(list.begin(), list.end(), [&](int e, int f) {
      const Point de = pts[static_cast<std::size_t>(halves[static_cast<std::size_t>(e)].to)] - pts[v];
      const Point df = pts[static_cast<std::size_t>(halves[static_cast<std::size_t>(f)].to)] - pts[v];
      return std::atan2(de.y, de.x) < std::atan2(df.y, df.x);
    });
    for (std::size_t k = 0; k < list.size(); ++k) pos_in_out[static_cast<std::size_t>(list[k])] = static_cast<int>(k);
  }
  auto twin = [](int e) { return e ^ 1; };
  auto next = [&](int e) {
    const int v = halves[static_cast<std::size_t>(e)].to;
    const auto& list = out[static_cast<std::size_t>(v)];
    const int k = pos_in_out[static_cast<std::size_t>(twin(e))];
    const int n = static_cast<int>(list.size());
    return list[static_cast<std::size_t>((k - 1 + n) % n)];
  };

  struct Cycle {
    std::vector<int> nodes;
    std::vector<int> halves;
    double area = 0.0;
    bool filled = false;
  };
  std::vector<Cycle> cycles;
  std::vector<char> visited(halves.size(), 0);
  for (std::size_t e0 = 0; e0 < halves.size(); ++e0) {
    if (visited[e0]) continue;
    Cycle c;
    int e = static_cast<int>(e0);
    while (!visited[static_cast<std::size_t>(e)]) {
      visited[static_cast<std::size_t>(e)] = 1;
      c.nodes.push_back(halves[static_cast<std::size_t>(e)].from);
      c.halves.push_back(e);
      e = next(e);
    }
    c.area = cycle_area(pts, c.nodes);
    cycles.push_back(std::move(c));
  }

  // Fill state of the face left of each cycle, probed next to its longest edge.
  auto inside_even_odd = [&](Point p) {
    bool inside = false;
    for (const auto& [a, b] : edges) {
      const Point pa = pts[static_cast<std::size_t>(a)], pb = pts[static_cast<std::size_t>(b)];
      if ((pa.y > p.y) != (pb.y > p.y)) {
        double x = pa.x + (p.y - pa.y) * (pb.x - pa.x) / (pb.y - pa.y);
        if (p.x < x) inside = !inside;
      }
    }
    return inside;
  };
  for (auto& c : cycles) {
    int best = c.halves.front();
    double best_len = -1;
    for (int e : c.halves) {
      const double len = norm(pts[static_cast<std::size_t>(halves[static_cast<std::size_t>(e)].to)] -
                              pts[static_cast<std::size_t>(halves[static_cast<std::size_t>(e)].from)]);
      if (len > best_len) best_len = len, best = e;
    }
    const Point a = pts[static_cast<std::size_t>(halves[static_cast<std::size_t>(best)].from)];
    const Point b = pts[static_cast<std::size_t>(halves[static_cast<std::size_t>(best)].to)];
    const Point mid = (a + b) * 0.5;
    double clearance = best_len * 0.5;
    for (const auto& [u, v] : edges) {
      const int hu = halves[static_cast<std::size_t>(best)].from, hv = halves[static_cast<std::size_t>(best)].to;
      if ((u == hu && v == hv) || (u == hv && v == hu)) continue;
      clearance = std::min(clearance, point_segment_distance(mid, pts[static_cast<std::size_t>(u)], pts[static_cast<std::size_t>(v)]));
    }
    const Point d = b - a;
    const Point left{-d.y / best_len, d.x / best_len};
    c.filled = inside_even_odd(mid + left * (0.5 * clearance));
  }

  MultiPolygon result;
  struct ShellRef {
    std::size_t cycle;
    std::size_t poly;
  };
  std::vector<ShellRef> shells;
  for (std::size_t ci = 0; ci < cycles.size(); ++ci) {
    const auto& c = cycles[ci];
    if (c.area <= 0 || !c.filled) continue;
    std::vector<std::vector<int>> loops = split_simple(c.nodes);
    std::vector<std::vector<int>> pinched_holes;
    for (auto& loop : loops) {
      if (cycle_area(pts, loop) > 0) {
        Polygon poly;
        for (int n : loop) poly.outer.push_back(pts[static_cast<std::size_t>(n)]);
        shells.push_back({ci, result.size()});
        result.push_back(std::move(poly));
      } else {
        pinched_holes.push_back(std::move(loop));
      }
    }
    for (auto& loop : pinched_holes) {
      Ring ring;
      for (int n : loop) ring.push_back(pts[static_cast<std::size_t>(n)]);
      // The touching hole belongs to the smallest of this cycle's shells containing it.
      std::size_t target = result.size();
      double target_area = std::numeric_limits<double>::infinity();
      for (const auto& s : shells) {
        if (s.cycle != ci) continue;
        Ring& outer = result[s.poly].outer;
        const double a = signed_area(outer);
        bool contains = false;
        for (const auto& p : ring) {
          if (!on_ring_boundary(outer, p, tol)) {
            contains = ring_contains(outer, p);
            break;
          }
        }
        if (contains && a < target_area) target = s.poly, target_area = a;
      }
      if (target < result.size()) result[target].holes.push_back(std::move(ring));
    }
  }

  // Component outlines whose surrounding face is filled become holes.
  for (const auto& c : cycles) {
    if (c.area >= 0 || !c.filled) continue;
    const Point v = pts[static_cast<std::size_t>(c.nodes.front())];
    std::size_t target = result.size();
    double target_area = std::numeric_limits<double>::infinity();
    for (const auto& s : shells) {
      const Ring& outer = result[s.poly].outer;
      if (on_ring_boundary(outer, v, tol) || !ring_contains(outer, v)) continue;
      const double a = signed_area(outer);
      if (a < target_area) target = s.poly, target_area = a;
    }
    if (target == result.size()) continue;
    Ring ring;
    for (int n : c.nodes) ring.push_back(pts[static_cast<std::size_t>(n)]);
    result[target].holes.push_back(std::move(ring));
  }
  return result;
}

std::vector<Point> convex_hull(std::span<const Point> input) {
  std::vector<Point> p(input.begin(), input.end());
  std::sort(p.begin(), p.end(), [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  p.erase(std::unique(p.begin(), p.end()), p.end());
  if (p.size() < 3) return p;
  std::vector<Point> hull(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 1] - hull[k - 2], p[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = p[i];
  }
  hull.resize(k - 1);
  return hull;
}

AxisBox envelope(std::span<const Point> points) noexcept {
  AxisBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
            -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : points) {
    b.min_x = std::min(b.min_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_x = std::max(b.max_x, p.x);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

RotatedRect min_area_rect(std::span<const Point> points) {
  const auto hull = convex_hull(points);
  if (hull.size() < 3 || std::abs(signed_area(hull)) <= 0.0) {
    throw Error(Errc::kDegenerateGeometry, "points are collinear");
  }
  const std::size_t n = hull.size();
  auto at = [&](std::size_t i) { return hull[i % n]; };

  // Caliper indices (unbounded, taken modulo n): farthest along the edge,
  // farthest from it, and minimum along it. Each only moves forward.
  std::size_t right = 1, top = 1, left = 1;
  double best_area = std::numeric_limits<double>::infinity();
  RotatedRect best;
  for (std::size_t i = 0; i < n; ++i) {
    const Point o = at(i);
    const Point e = at(i + 1) - o;
    const double len = norm(e);
    const Point u = e * (1.0 / len);
    const Point v{-u.y, u.x};
    right = std::max(right, i + 1);
    while (dot(at(right + 1) - at(right), u) > 0) ++right;
    top = std::max(top, right);
    while (dot(at(top + 1) - at(top), v) > 0) ++top;
    left = std::max(left, top);
    while (dot(at(left + 1) - at(left), u) < 0) ++left;
    const std::size_t i_max_u = right, i_max_v = top, i_min_u = left;

    const double max_u = dot(at(i_max_u) - o, u);
    const double min_u = std::min(0.0, dot(at(i_min_u) - o, u));
    const double max_v = dot(at(i_max_v) - o, v);
    const double w = max_u - min_u;
    const double h = max_v;
    const double a = w * h;
    if (a < best_area) {
      best_area = a;
      const double mu = 0.5 * (max_u + min_u), mv = 0.5 * max_v;
      const Point c = o + u * mu + v * mv;
      Point long_dir = u;
      double long_side = w, short_side = h;
      if (h > w) {
        long_dir = v;
        std::swap(long_side, short_side);
      }
      double angle = std::atan2(long_dir.y, long_dir.x) * 180.0 / std::numbers::pi;
      const bool square = std::abs(long_side - short_side) <= 1e-12 * long_side;
      const double period = square ? 90.0 : 180.0;
      angle = std::fmod(angle, period);
      if (angle < 0) angle += period;
      if (angle >= period - 1e-9) angle = 0.0;
      best = {c.x, c.y, long_side, short_side, angle};
    }
  }
  return best;
}

Descriptors describe(const MultiPolygon& mp) {
  double area = 0.0, cx = 0.0, cy = 0.0, perim = 0.0;
  auto accumulate = [&](const Ring& r, double sign) {
    const std::size_t n = r.size();
    if (n < 3) return;
    double a = signed_area(r);
    // Weight ring by its oriented contribution regardless of stored winding.
    const double w = sign * (a < 0 ? -1.0 : 1.0);
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Point p = r[i], q = r[(i + 1) % n];
      const double f = p.x * q.y - q.x * p.y;
      sx += (p.x + q.x) * f;
      sy += (p.y + q.y) * f;
    }
    area += w * a;
    cx += w * sx / 6.0;
    cy += w * sy / 6.0;
    perim += ring_length(r);
  };
  for (const auto& poly : mp) {
    accumulate(poly.outer, 1.0);
    for (const auto& h : poly.holes) accumulate(h, -1.0);
  }
  if (!(area > 0.0) || !std::isfinite(area)) throw Error(Errc::kDegenerateGeometry, "polygon has zero area");
  Descriptors d;
  d.area = area;
  d.centroid = {cx / area, cy / area};
  d.perimeter = perim;
  d.compactness = 4.0 * std::numbers::pi * area / (perim * perim);
  return d;
}

}  // namespace iqh::geom
