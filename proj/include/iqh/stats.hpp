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
#include <utility>
#include <vector>

#include "iqh/corpus.hpp"
#include "iqh/geometry.hpp"

namespace iqh {

/// Log-binned histogram. `edges` has counts.size() + 1 entries; values below
/// the first edge or above the last one land in the outlier bins.
struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
  std::size_t underflow = 0;
  std::size_t overflow = 0;

  std::size_t total() const noexcept;
  /// Index of the bin holding `v`, or -1 / counts.size() for the outlier bins.
  std::ptrdiff_t bin_of(double v) const noexcept;
  friend bool operator==(const Histogram&, const Histogram&) = default;
};

inline constexpr std::size_t kHistogramBins = 20;
inline constexpr double kAspectLo = 1.0 / 8.0;
inline constexpr double kAspectHi = 8.0;

Histogram log_histogram(const std::vector<double>& values, double lo, double hi, std::size_t bins = kHistogramBins);
Histogram aspect_histogram(const std::vector<double>& ratios);
/// 20 log bins over [min, max] of the positive values; non-positive values underflow.
Histogram area_histogram(const std::vector<double>& areas);

struct ImageSizeStats {
  double mean_width = 0.0;
  double mean_height = 0.0;
  std::size_t count = 0;
  std::vector<std::pair<int, int>> sizes;  // per decodable image, in image_files() order
};

/// Throws Error(kNoImages) when nothing decodes.
ImageSizeStats image_size_stats(const DatasetHandle& ds, std::size_t jobs = 1);

std::map<std::int64_t, std::size_t> class_histogram(const CocoDocument& doc);

struct AspectAreaHistograms {
  Histogram image_aspect;
  Histogram bbox_aspect;
  Histogram image_area;
  Histogram bbox_area;
};

/// Image entries without dimensions and boxes with non-positive sides are skipped.
AspectAreaHistograms aspect_area_histograms(const CocoDocument& doc);

geom::RotatedRect fit_rotated_bbox(const geom::MultiPolygon& poly);
geom::Descriptors polygon_descriptors(const geom::MultiPolygon& poly);

struct FieldSummary {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  std::size_t count = 0;
  friend bool operator==(const FieldSummary&, const FieldSummary&) = default;
};

/// Over present, non-null values. Throws kUnknownField when no row carries the
/// field, kNonNumericField when a present value is not a number.
FieldSummary field_summary(const FeatureTable& table, const std::string& field);

struct PolygonSummary {
  std::string id;  // "ann:<id>" or "feature:<row>"
  std::string category;
  double area = 0.0;
  geom::Point centroid;
  double compactness = 0.0;
  friend bool operator==(const PolygonSummary&, const PolygonSummary&) = default;
};

struct FittedBox {
  std::string id;
  double axis_w = 0.0;
  double axis_h = 0.0;
  geom::RotatedRect rotated;
  friend bool operator==(const FittedBox& a, const FittedBox& b) {
    return a.id == b.id && a.axis_w == b.axis_w && a.axis_h == b.axis_h && a.rotated.cx == b.rotated.cx &&
           a.rotated.cy == b.rotated.cy && a.rotated.w == b.rotated.w && a.rotated.h == b.rotated.h &&
           a.rotated.angle_deg == b.rotated.angle_deg;
  }
};

struct StatsReport {
  std::string dataset;
  fs::path images_dir;
  std::vector<std::string> image_files;  // relative to images_dir
  double mean_width = 0.0;
  double mean_height = 0.0;
  std::map<std::int64_t, std::size_t> class_histogram;
  Histogram image_aspect_hist;
  Histogram bbox_aspect_hist;
  Histogram image_area_hist;
  Histogram bbox_area_hist;
  std::vector<PolygonSummary> polygon_summaries;
  std::vector<FittedBox> fitted_boxes;
  std::map<std::string, FieldSummary> field_summaries;
  std::vector<std::string> warnings;
  friend bool operator==(const StatsReport&, const StatsReport&) = default;
};

json to_json(const StatsReport& report);
StatsReport stats_report_from_json(const json& doc);

struct StatsOptions {
  std::vector<std::string> fields;  // GeoJSON fields to summarise; empty means every numeric one
  std::size_t jobs = 1;
};

/// Everything above for one dataset. Degenerate polygons are skipped with a warning.
StatsReport compute_stats(const DatasetHandle& ds, const StatsOptions& options = {});

struct ExportOptions {
  std::size_t sample = 16;   // thumbnails in imgs_preview.html
  int thumb_size = 128;      // longest thumbnail side in pixels
  std::uint64_t seed = 0;
  std::vector<std::string> fields_to_include;  // annots_summary.html columns; empty means all
};

/// Writes stats.json, four histogram SVGs, annots_summary.html and
/// imgs_preview.html (plus thumbnails). Returns the written paths.
std::vector<fs::path> export_report(const StatsReport& report, const fs::path& out, const ExportOptions& options = {});

}  // namespace iqh
