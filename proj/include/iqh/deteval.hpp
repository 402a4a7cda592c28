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

#include <map>
#include <string>
#include <vector>

#include "iqh/corpus.hpp"

namespace iqh {

/// Intersection over union of two xywh boxes; 0 when the union is empty.
double iou(const BBox& a, const BBox& b) noexcept;

struct EvalParams {
  std::vector<double> iou_thresholds;  // default 0.50:0.05:0.95
  std::size_t max_dets = 100;          // per image and category
  std::size_t recall_points = 101;

  EvalParams();
};

struct EvalSummary {
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ar_100 = 0.0;
  std::map<std::int64_t, double> per_category_ap;  // categories with ground truth only
  std::size_t skipped_predictions = 0;
  std::vector<std::string> warnings;
};

json to_json(const EvalSummary& s);

/// Per (image, category) matching of score-sorted detections against the
/// unmatched ground truth with highest IoU above each threshold; crowd
/// regions absorb matches without being consumed and those detections are
/// ignored. AP is the 101-point interpolated precision averaged over
/// thresholds and categories. Throws kEmptyGroundTruth.
EvalSummary evaluate(const CocoDocument& gt, const std::vector<DetectionRecord>& preds, const EvalParams& params = {});

/// Precision-recall bookkeeping for one category and threshold, exposed for tests.
struct MatchSequence {
  std::vector<bool> true_positive;  // per kept detection in global score order
  std::size_t ground_truth = 0;     // non-crowd ground truth count
};

/// 101-point interpolated AP of a match sequence (-1 when there is no ground truth).
double interpolated_ap(const MatchSequence& seq, std::size_t recall_points = 101);

}  // namespace iqh
