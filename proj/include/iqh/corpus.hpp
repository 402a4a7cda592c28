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

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iqh/geometry.hpp"
#include "iqh/util.hpp"

namespace iqh {

// Files the toolkit itself writes into dataset roots; never bound as annotations.
inline constexpr std::string_view kSanityReportFile = "sanity_report.json";
inline constexpr std::string_view kModifierLogFile = "modifier_log.json";
inline constexpr std::string_view kModifierDigestFile = ".iqh_modifier_digest";

/// A dataset folder: one images subdirectory plus optional annotation files at
/// the root and an optional `masks` subdirectory.
struct DatasetHandle {
  fs::path data_path;
  fs::path parent_folder;
  fs::path images_dir;
  std::optional<fs::path> coco_annotations;
  std::optional<fs::path> geojson_annotations;
  std::optional<fs::path> detections;
  std::optional<fs::path> mask_dir;
  std::map<std::string, std::string> params;

  const std::string& name() const { return params.at("ds_name"); }

  /// Image files below images_dir (recursive, by extension), relative to
  /// images_dir, sorted.
  std::vector<fs::path> image_files() const;

  /// Every regular file below images_dir, relative, sorted.
  std::vector<fs::path> all_files() const;

  friend bool operator==(const DatasetHandle&, const DatasetHandle&) = default;
};

/// Binds the dataset layout under `path`. The images directory is the
/// lexicographically first subdirectory whose name does not contain "mask".
DatasetHandle discover(const fs::path& path);

/// `ds_name + "#" + modifier_name`; rejects empty names and path separators.
std::string derived_name(std::string_view ds_name, std::string_view modifier_name);

struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct CocoImage {
  std::int64_t id = 0;
  std::string file_name;
  std::int64_t width = 0;
  std::int64_t height = 0;
  json extra = json::object();
  friend bool operator==(const CocoImage&, const CocoImage&) = default;
};

struct CocoAnnotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  BBox bbox;
  double area = 0.0;
  int iscrowd = 0;
  // Polygon segmentation as flat [x0, y0, x1, y1, ...] lists.
  std::optional<std::vector<std::vector<double>>> segmentation;
  json extra = json::object();
  friend bool operator==(const CocoAnnotation&, const CocoAnnotation&) = default;
};

struct CocoCategory {
  std::int64_t id = 0;
  std::string name;
  json extra = json::object();
  friend bool operator==(const CocoCategory&, const CocoCategory&) = default;
};

struct CocoDocument {
  std::vector<CocoImage> images;
  std::vector<CocoAnnotation> annotations;
  std::vector<CocoCategory> categories;
  json extra = json::object();  // unknown top-level keys, kept for writing back
  friend bool operator==(const CocoDocument&, const CocoDocument&) = default;
};

CocoDocument parse_coco(const json& doc);
CocoDocument load_coco(const fs::path& path);
json to_json(const CocoDocument& doc);
void write_coco(const CocoDocument& doc, const fs::path& path);

/// Segmentation polygons of an annotation, or its bbox as a rectangle.
geom::MultiPolygon annotation_shape(const CocoAnnotation& ann);

struct DetectionRecord {
  std::int64_t image_id = 0;
  BBox bbox;
  double area = 0.0;
  std::int64_t category_id = 0;
  std::int64_t id = 0;
  int iscrowd = 0;
  double score = 0.0;
  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

/// COCO-inference detections: a bare JSON array. Missing `id` defaults to the
/// 1-based position, missing `area` to w*h, missing `iscrowd` to 0.
std::vector<DetectionRecord> parse_detections(const json& doc);
std::vector<DetectionRecord> load_detections(const fs::path& path);
json to_json(const std::vector<DetectionRecord>& dets);

enum class GeometryState { kPresent, kMissing, kEmpty };

struct FeatureRow {
  std::optional<std::string> image_filename;
  std::optional<std::string> class_id;
  GeometryState geometry_state = GeometryState::kMissing;
  geom::MultiPolygon geometry;
  json properties = json::object();  // every property as read, including the required ones
};

struct FeatureTable {
  std::vector<FeatureRow> rows;
  json extra = json::object();  // top-level members other than type/features
};

FeatureTable parse_geojson(const json& doc);
FeatureTable load_geojson(const fs::path& path);
json to_json(const FeatureTable& table);
void write_geojson(const FeatureTable& table, const fs::path& path);

/// Relative image paths listed by a task (an `output.json` holding an array of
/// strings). Throws Error(kValidation) when a path escapes `output_dir` or is missing.
std::vector<fs::path> load_generated_images(const fs::path& output_dir, const fs::path& listing);

}  // namespace iqh
