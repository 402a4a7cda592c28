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

// Independent reference implementations shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "iqh/deteval.hpp"
#include "iqh/image.hpp"

namespace iqh::test {

inline Image random_image(int w, int h, int channels, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, 255);
  Image img(w, h, channels);
  for (auto& v : img.samples()) v = static_cast<std::uint16_t>(u(rng));
  return img;
}

// Loop-based PSNR straight from the definition.
inline double psnr_oracle(const Image& a, const Image& b) {
  double sse = 0.0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x)
      for (int c = 0; c < a.channels(); ++c) {
        const double d = double(a.at(x, y, c)) - double(b.at(x, y, c));
        sse += d * d;
      }
  const double mse = sse / (double(a.width()) * a.height() * a.channels());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

// SSIM evaluated window by window with a full 11x11 Gaussian weight table.
inline double ssim_oracle(const Image& a, const Image& b) {
  const int r = 5;
  double w[11][11], total = 0.0;
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j) total += w[i + r][j + r] = std::exp(-(i * i + j * j) / (2 * 1.5 * 1.5));
  for (auto& row : w)
    for (double& v : row) v /= total;
  const double c1 = std::pow(0.01 * 255, 2), c2 = std::pow(0.03 * 255, 2);
  double sum = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    double acc = 0.0;
    int n = 0;
    for (int y = r; y < a.height() - r; ++y)
      for (int x = r; x < a.width() - r; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = -r; i <= r; ++i)
          for (int j = -r; j <= r; ++j) {
            const double k = w[i + r][j + r], va = a.at(x + j, y + i, c), vb = b.at(x + j, y + i, c);
            ma += k * va, mb += k * vb, saa += k * va * va, sbb += k * vb * vb, sab += k * va * vb;
          }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++n;
      }
    sum += acc / n;
  }
  return sum / a.channels();
}


struct Instance {
  std::vector<BBox> gt;
  std::vector<std::pair<BBox, double>> dets;  // box, score
};

inline double iou_oracle(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// Enumerates every injective assignment of detections (score order) to
// ground truth and keeps the one whose per-detection IoU sequence is
// lexicographically largest, among assignments using only pairs at or above
// the threshold. Returns the true-positive flags in score order.
inline std::vector<bool> best_assignment(const Instance& inst, const std::vector<std::size_t>& order, double t) {
  std::vector<double> best_seq;
  std::vector<int> best_map;
  std::vector<int> map(order.size(), -1);
  std::vector<bool> used(inst.gt.size(), false);
  std::function<void(std::size_t)> rec = [&](std::size_t k) {
    if (k == order.size()) {
      std::vector<double> seq;
      for (std::size_t i = 0; i < order.size(); ++i)
        seq.push_back(map[i] < 0 ? -1.0 : iou_oracle(inst.dets[order[i]].first, inst.gt[map[i]]));
      if (best_map.empty() || seq > best_seq) best_seq = seq, best_map = map;
      return;
    }
    map[k] = -1;
    rec(k + 1);
    for (std::size_t g = 0; g < inst.gt.size(); ++g) {
      if (used[g] || iou_oracle(inst.dets[order[k]].first, inst.gt[g]) < t) continue;
      used[g] = true;
      map[k] = static_cast<int>(g);
      rec(k + 1);
      used[g] = false;
      map[k] = -1;
    }
  };
  rec(0);
  std::vector<bool> tp;
  for (int m : best_map) tp.push_back(m >= 0);
  return tp;
}

// 101-point interpolated precision: for each recall level, the best
// precision reached at any rank whose recall is at least that level.
inline double ap_oracle(const std::vector<bool>& tp, std::size_t n_gt) {
  double sum = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    double best = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < tp.size(); ++i) {
      hits += tp[i];
      const double recall = double(hits) / double(n_gt), precision = double(hits) / double(i + 1);
      if (recall >= level) best = std::max(best, precision);
    }
    sum += best;
  }
  return sum / 101.0;
}

struct OracleSummary {
  double ap = 0, ap50 = 0, ap75 = 0, ar = 0;
};

inline OracleSummary oracle(const Instance& inst) {
  std::vector<std::size_t> order(inst.dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return inst.dets[a].second > inst.dets[b].second; });
  OracleSummary s;
  double ap_sum = 0.0, recall_sum = 0.0;
  for (int k = 0; k < 10; ++k) {
    const double t = 0.5 + 0.05 * k;
    const auto tp = best_assignment(inst, order, t);
    const double ap = ap_oracle(tp, inst.gt.size());
    ap_sum += ap;
    if (k == 0) s.ap50 = ap;
    if (k == 5) s.ap75 = ap;
    recall_sum += double(std::count(tp.begin(), tp.end(), true)) / double(inst.gt.size());
  }
  s.ap = ap_sum / 10;
  s.ar = recall_sum / 10;
  return s;
}

inline CocoDocument to_gt(const Instance& inst) {
  CocoDocument d;
  d.images.push_back({1, "a.png", 100, 100, json::object()});
  d.categories.push_back({1, "x", json::object()});
  for (std::size_t i = 0; i < inst.gt.size(); ++i) {
    CocoAnnotation a;
    a.id = static_cast<std::int64_t>(i + 1);
    a.image_id = 1;
    a.category_id = 1;
    a.bbox = inst.gt[i];
    a.area = inst.gt[i].w * inst.gt[i].h;
    d.annotations.push_back(a);
  }
  return d;
}

inline std::vector<DetectionRecord> to_dets(const Instance& inst) {
  std::vector<DetectionRecord> out;
  for (std::size_t i = 0; i < inst.dets.size(); ++i) {
    DetectionRecord r;
    r.id = static_cast<std::int64_t>(i + 1);
    r.image_id = 1;
    r.category_id = 1;
    r.bbox = inst.dets[i].first;
    r.score = inst.dets[i].second;
    out.push_back(r);
  }
  return out;
}

}  // namespace iqh::test
