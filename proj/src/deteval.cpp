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

#include "iqh/deteval.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "iqh/error.hpp"

namespace iqh {

double iou(const BBox& a, const BBox& b) noexcept {
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  const double inter = iw > 0 && ih > 0 ? iw * ih : 0.0;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

EvalParams::EvalParams() {
  for (int i = 0; i < 10; ++i) iou_thresholds.push_back(0.5 + 0.05 * i);
}

double interpolated_ap(const MatchSequence& seq, std::size_t recall_points) {
  if (seq.ground_truth == 0) return -1.0;
  const std::size_t nd = seq.true_positive.size();
  std::vector<double> rc(nd), pr(nd);
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < nd; ++i) {
    (seq.true_positive[i] ? tp : fp) += 1;
    rc[i] = tp / static_cast<double>(seq.ground_truth);
    pr[i] = tp / (tp + fp);
  }
  for (std::size_t i = nd; i-- > 1;) pr[i - 1] = std::max(pr[i - 1], pr[i]);
  double sum = 0.0;
  for (std::size_t r = 0; r < recall_points; ++r) {
    const double thr = static_cast<double>(r) / static_cast<double>(recall_points - 1);
    const auto it = std::lower_bound(rc.begin(), rc.end(), thr);
    if (it != rc.end()) sum += pr[static_cast<std::size_t>(it - rc.begin())];
  }
  return sum / static_cast<double>(recall_points);
}

EvalSummary evaluate(const CocoDocument& gt, const std::vector<DetectionRecord>& preds, const EvalParams& params) {
  EvalSummary s;
  std::set<std::int64_t> image_ids, category_ids;
  for (const auto& im : gt.images) image_ids.insert(im.id);
  for (const auto& c : gt.categories) category_ids.insert(c.id);

  using Key = std::pair<std::int64_t, std::int64_t>;  // (category, image)
  std::map<Key, std::vector<const CocoAnnotation*>> gts;
  std::map<std::int64_t, std::size_t> non_crowd;
  for (const auto& a : gt.annotations) {
    gts[{a.category_id, a.image_id}].push_back(&a);
    if (!a.iscrowd) ++non_crowd[a.category_id];
    category_ids.insert(a.category_id);
  }
  if (non_crowd.empty()) throw Error(Errc::kEmptyGroundTruth, "ground truth has no non-crowd annotations");

  std::map<Key, std::vector<const DetectionRecord*>> dts;
  for (const auto& d : preds) {
    if (!image_ids.empty() && !image_ids.contains(d.image_id)) {
      ++s.skipped_predictions;
      continue;
    }
    if (!category_ids.contains(d.category_id)) {
      ++s.skipped_predictions;
      continue;
    }
    dts[{d.category_id, d.image_id}].push_back(&d);
  }
  if (s.skipped_predictions) {
    s.warnings.push_back(std::to_string(s.skipped_predictions) + " predictions reference unknown images or categories");
    log().warn("{}", s.warnings.back());
  }
  auto by_score = [](const DetectionRecord* a, const DetectionRecord* b) {
    return a->score != b->score ? a->score > b->score : a->id < b->id;
  };

  const std::size_t nt = params.iou_thresholds.size();
  double ap_sum = 0, ap50_sum = 0, ap75_sum = 0, ar_sum = 0;
  std::size_t n_cat = 0;
  for (const auto& [cat, n_gt] : non_crowd) {
    // Per threshold: (score, id, tp, ignored) of every kept detection.
    struct Entry {
      double score;
      std::int64_t id;
      bool tp;
      bool ignored;
    };
    std::vector<std::vector<Entry>> entries(nt);
    std::set<std::int64_t> imgs;
    for (const auto& [k, v] : gts)
      if (k.first == cat) imgs.insert(k.second);
    for (const auto& [k, v] : dts)
      if (k.first == cat) imgs.insert(k.second);
    for (std::int64_t img : imgs) {
      std::vector<const CocoAnnotation*> g;
      if (auto it = gts.find({cat, img}); it != gts.end()) g = it->second;
      // Non-crowd ground truth first, original order otherwise.
      std::stable_partition(g.begin(), g.end(), [](const CocoAnnotation* a) { return !a->iscrowd; });
      std::vector<const DetectionRecord*> d;
      if (auto it = dts.find({cat, img}); it != dts.end()) d = it->second;
      std::sort(d.begin(), d.end(), by_score);
      if (d.size() > params.max_dets) d.resize(params.max_dets);

      std::vector<std::vector<double>> ious(d.size(), std::vector<double>(g.size()));
      for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < g.size(); ++j) {
          if (g[j]->iscrowd) {
            const BBox& a = d[i]->bbox;
            const BBox& b = g[j]->bbox;
            const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
            const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
            const double inter = iw > 0 && ih > 0 ? iw * ih : 0.0;
            const double area = a.w * a.h;
            ious[i][j] = area > 0 ? inter / area : 0.0;
          } else {
            ious[i][j] = iou(d[i]->bbox, g[j]->bbox);
          }
        }

      for (std::size_t t = 0; t < nt; ++t) {
        std::vector<bool> taken(g.size(), false);
        for (std::size_t i = 0; i < d.size(); ++i) {
          double best = std::min(params.iou_thresholds[t], 1 - 1e-10);
          std::ptrdiff_t m = -1;
          for (std::size_t j = 0; j < g.size(); ++j) {
            if (taken[j] && !g[j]->iscrowd) continue;
            // Once a non-crowd match exists, crowd regions cannot replace it.
            if (m > -1 && !g[static_cast<std::size_t>(m)]->iscrowd && g[j]->iscrowd) break;
            if (ious[i][j] < best) continue;
            best = ious[i][j];
            m = static_cast<std::ptrdiff_t>(j);
          }
          Entry e{d[i]->score, d[i]->id, false, false};
          if (m > -1) {
            const auto um = static_cast<std::size_t>(m);
            taken[um] = true;
            if (g[um]->iscrowd) e.ignored = true;
            else e.tp = true;
          }
          entries[t].push_back(e);
        }
      }
    }

    double cat_ap = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
      auto& es = entries[t];
      std::stable_sort(es.begin(), es.end(), [](const Entry& a, const Entry& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
      });
      MatchSequence seq;
      seq.ground_truth = n_gt;
      for (const auto& e : es)
        if (!e.ignored) seq.true_positive.push_back(e.tp);
      const double ap = interpolated_ap(seq, params.recall_points);
      const double tp = static_cast<double>(std::count(seq.true_positive.begin(), seq.true_positive.end(), true));
      ar_sum += tp / static_cast<double>(n_gt);
      cat_ap += ap;
      const double thr = params.iou_thresholds[t];
      if (std::abs(thr - 0.5) < 1e-9) ap50_sum += ap;
      if (std::abs(thr - 0.75) < 1e-9) ap75_sum += ap;
    }
    cat_ap /= static_cast<double>(nt);
    s.per_category_ap[cat] = cat_ap;
    ap_sum += cat_ap;
    ++n_cat;
  }
  s.ap = ap_sum / static_cast<double>(n_cat);
  s.ap50 = ap50_sum / static_cast<double>(n_cat);
  s.ap75 = ap75_sum / static_cast<double>(n_cat);
  s.ar_100 = ar_sum / static_cast<double>(n_cat * nt);
  return s;
}

json to_json(const EvalSummary& s) {
  json per = json::object();
  for (const auto& [k, v] : s.per_category_ap) per[std::to_string(k)] = v;
  return {{"AP", s.ap},
          {"AP50", s.ap50},
          {"AP75", s.ap75},
          {"AR_100", s.ar_100},
          {"per_category_AP", per},
          {"skipped_predictions", s.skipped_predictions},
          {"warnings", s.warnings}};
}

}  // namespace iqh
