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

#include <string>
#include <vector>

#include "iqh/corpus.hpp"

namespace iqh {

struct ChangeEntry {
  std::string id_or_path;
  std::string reason;
  friend bool operator==(const ChangeEntry&, const ChangeEntry&) = default;
};

using ChangeLog = std::vector<ChangeEntry>;

/// Outcome of a sanity pass. Each count is the size of its change log.
struct SanityReport {
  ChangeLog duplicates;
  ChangeLog invalid_images;
  ChangeLog dims_fixed;
  ChangeLog annotations_dropped;
  ChangeLog geometries_fixed;
  ChangeLog geometries_dropped;
  ChangeLog warnings;  // reported but not acted upon (e.g. dims of a missing file)
  fs::path output_path;

  std::size_t duplicates_removed() const noexcept { return duplicates.size(); }
  std::size_t dims_fixed_count() const noexcept { return dims_fixed.size(); }
  std::size_t geometries_fixed_count() const noexcept { return geometries_fixed.size(); }
  std::size_t geometries_dropped_count() const noexcept { return geometries_dropped.size(); }
  bool no_changes() const noexcept;
  friend bool operator==(const SanityReport&, const SanityReport&) = default;
};

json to_json(const SanityReport& report);
SanityReport sanity_report_from_json(const json& doc);

struct SanityFlags {
  bool dedupe = true;
  bool image_validity = true;
  bool annotation_integrity = true;
  bool dims_fix = true;
  bool geojson_clean = true;
  bool geometry_repair = true;

  bool any() const noexcept {
    return dedupe || image_validity || annotation_integrity || dims_fix || geojson_clean || geometry_repair;
  }
};

struct DedupeResult {
  CocoDocument doc;
  ChangeLog removed;
};

/// Keeps the first image entry per file_name and re-points annotations of the
/// dropped entries to the kept id. Later entries reusing an id are dropped too.
DedupeResult dedupe_images(const CocoDocument& doc);

/// Classifies every file under the images directory: bad-magic, truncated
/// (missing PNG IEND / JPEG EOI trailer) or decode-error. Sorted by path.
ChangeLog check_image_files(const DatasetHandle& ds, std::size_t jobs = 1);

struct IntegrityIssue {
  std::int64_t annotation_id = 0;
  std::string issue;  // dangling-image, unknown-category, degenerate-bbox, out-of-bounds, area-mismatch
  friend bool operator==(const IntegrityIssue&, const IntegrityIssue&) = default;
};

/// Annotation problems. The category check is skipped when the document has
/// no categories at all; the bounds check needs known image dimensions.
std::vector<IntegrityIssue> check_annotation_integrity(const CocoDocument& doc);

/// Image file referenced by a COCO file_name, looked up under the images
/// directory first and the dataset root second.
std::optional<fs::path> resolve_image(const DatasetHandle& ds, const std::string& file_name);

struct DimsFixResult {
  CocoDocument doc;
  ChangeLog fixed;
  ChangeLog unreadable;
};

DimsFixResult fix_image_dims(const CocoDocument& doc, const DatasetHandle& ds);

struct GeojsonSanitizeResult {
  FeatureTable table;
  ChangeLog rows_dropped;  // missing required fields
  ChangeLog geometries_fixed;
  ChangeLog geometries_dropped;  // reasons: missing, empty, invalid:<issue>
};

GeojsonSanitizeResult sanitize_geojson(const FeatureTable& table, bool repair = true);

struct SanityOptions {
  SanityFlags flags;
  bool overwrite = false;
  std::size_t jobs = 1;
};

/// Writes a sanitized copy of `ds` to `out` (same layout) together with
/// `sanity_report.json`. Throws kEmptyResult when no image survives.
SanityReport run_sanity(const DatasetHandle& ds, const fs::path& out, const SanityOptions& options = {});

}  // namespace iqh
