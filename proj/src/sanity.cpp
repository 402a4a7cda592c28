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

#include "iqh/sanity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "iqh/error.hpp"
#include "iqh/image.hpp"

namespace iqh {

bool SanityReport::no_changes() const noexcept {
  return duplicates.empty() && invalid_images.empty() && dims_fixed.empty() && annotations_dropped.empty() &&
         geometries_fixed.empty() && geometries_dropped.empty();
}

namespace {

json log_to_json(const ChangeLog& log) {
  json arr = json::array();
  for (const auto& e : log) arr.push_back({{"id_or_path", e.id_or_path}, {"reason", e.reason}});
  return arr;
}

ChangeLog log_from_json(const json& arr) {
  ChangeLog out;
  for (const auto& e : arr) out.push_back({e.at("id_or_path").get<std::string>(), e.at("reason").get<std::string>()});
  return out;
}

}  // namespace

json to_json(const SanityReport& r) {
  return {{"duplicates_removed", r.duplicates.size()},
          {"duplicates_log", log_to_json(r.duplicates)},
          {"invalid_images", log_to_json(r.invalid_images)},
          {"dims_fixed", r.dims_fixed.size()},
          {"dims_fixed_log", log_to_json(r.dims_fixed)},
          {"annotations_dropped", log_to_json(r.annotations_dropped)},
          {"geometries_fixed", r.geometries_fixed.size()},
          {"geometries_fixed_log", log_to_json(r.geometries_fixed)},
          {"geometries_dropped", r.geometries_dropped.size()},
          {"geometries_dropped_log", log_to_json(r.geometries_dropped)},
          {"warnings", log_to_json(r.warnings)},
          {"output_path", r.output_path.string()}};
}

SanityReport sanity_report_from_json(const json& doc) {
  SanityReport r;
  r.duplicates = log_from_json(doc.at("duplicates_log"));
  r.invalid_images = log_from_json(doc.at("invalid_images"));
  r.dims_fixed = log_from_json(doc.at("dims_fixed_log"));
  r.annotations_dropped = log_from_json(doc.at("annotations_dropped"));
  r.geometries_fixed = log_from_json(doc.at("geometries_fixed_log"));
  r.geometries_dropped = log_from_json(doc.at("geometries_dropped_log"));
  if (doc.contains("warnings")) r.warnings = log_from_json(doc.at("warnings"));
  r.output_path = doc.at("output_path").get<std::string>();
  return r;
}

DedupeResult dedupe_images(const CocoDocument& doc) {
  DedupeResult res;
  res.doc = doc;
  res.doc.images.clear();
  std::unordered_map<std::string, std::int64_t> kept_by_name;
  std::set<std::int64_t> kept_ids;
  std::unordered_map<std::int64_t, std::int64_t> remap;
  for (const auto& im : doc.images) {
    auto it = kept_by_name.find(im.file_name);
    if (it != kept_by_name.end()) {
      res.removed.push_back({"image:" + std::to_string(im.id), "duplicate-file-name:" + im.file_name});
      if (im.id != it->second && !kept_ids.contains(im.id)) remap[im.id] = it->second;
      continue;
    }
    if (kept_ids.contains(im.id)) {
      res.removed.push_back({"image:" + std::to_string(im.id), "duplicate-id:" + im.file_name});
      continue;
    }
    kept_by_name.emplace(im.file_name, im.id);
    kept_ids.insert(im.id);
    res.doc.images.push_back(im);
  }
  for (auto& a : res.doc.annotations) {
    if (auto it = remap.find(a.image_id); it != remap.end()) a.image_id = it->second;
  }
  return res;
}

ChangeLog check_image_files(const DatasetHandle& ds, std::size_t jobs) {
  if (!fs::is_directory(ds.images_dir)) throw Error(Errc::kIo, "images directory unreadable: " + ds.images_dir.string());
  const auto files = ds.all_files();
  std::vector<std::optional<std::string>> reasons(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    std::vector<std::uint8_t> bytes;
    try {
      bytes = read_bytes(ds.images_dir / files[i]);
    } catch (const Error&) {
      reasons[i] = "unreadable";
      return;
    }
    const ImageFormat fmt = sniff_format(bytes);
    if (fmt == ImageFormat::kUnknown) {
      reasons[i] = "bad-magic";
    } else if (!has_complete_trailer(fmt, bytes)) {
      reasons[i] = "truncated";
    } else if (!decode_image(bytes)) {
      reasons[i] = "decode-error";
    }
  });
  ChangeLog out;
  for (std::size_t i = 0; i < files.size(); ++i)
    if (reasons[i]) out.push_back({files[i].generic_string(), *reasons[i]});
  return out;
}

std::vector<IntegrityIssue> check_annotation_integrity(const CocoDocument& doc) {
  std::unordered_map<std::int64_t, const CocoImage*> images;
  for (const auto& im : doc.images) images.emplace(im.id, &im);
  std::set<std::int64_t> categories;
  for (const auto& c : doc.categories) categories.insert(c.id);

  std::vector<IntegrityIssue> out;
  for (const auto& a : doc.annotations) {
    auto it = images.find(a.image_id);
    if (it == images.end()) out.push_back({a.id, "dangling-image"});
    if (!categories.empty() && !categories.contains(a.category_id)) out.push_back({a.id, "unknown-category"});
    if (!(a.bbox.w > 0.0) || !(a.bbox.h > 0.0)) {
      out.push_back({a.id, "degenerate-bbox"});
      continue;
    }
    if (it != images.end() && it->second->width > 0 && it->second->height > 0) {
      const double tol = 1e-6;
      const double w = static_cast<double>(it->second->width), h = static_cast<double>(it->second->height);
      if (a.bbox.x < -tol || a.bbox.y < -tol || a.bbox.x + a.bbox.w > w + tol || a.bbox.y + a.bbox.h > h + tol) {
        out.push_back({a.id, "out-of-bounds"});
      }
    }
    if (!a.segmentation) {
      const double box = a.bbox.w * a.bbox.h;
      const double denom = std::max(a.area, box);
      if (!(denom > 0.0) || std::abs(a.area - box) / denom > 0.5) out.push_back({a.id, "area-mismatch"});
    }
  }
  return out;
}

std::optional<fs::path> resolve_image(const DatasetHandle& ds, const std::string& file_name) {
  for (const fs::path& base : {ds.images_dir, ds.data_path}) {
    fs::path p = base / file_name;
    if (fs::is_regular_file(p)) return p;
  }
  return std::nullopt;
}

DimsFixResult fix_image_dims(const CocoDocument& doc, const DatasetHandle& ds) {
  DimsFixResult res;
  res.doc = doc;
  for (auto& im : res.doc.images) {
    auto path = resolve_image(ds, im.file_name);
    if (!path) {
      res.unreadable.push_back({im.file_name, "missing-file"});
      continue;
    }
    std::optional<Image> img;
    try {
      img = decode_image(read_bytes(*path));
    } catch (const Error&) {
    }
    if (!img) {
      res.unreadable.push_back({im.file_name, "undecodable"});
      continue;
    }
    if (im.width != img->width() || im.height != img->height()) {
      res.fixed.push_back({im.file_name, std::to_string(im.width) + "x" + std::to_string(im.height) + "->" +
                                             std::to_string(img->width()) + "x" + std::to_string(img->height())});
      im.width = img->width();
      im.height = img->height();
    }
  }
  return res;
}

GeojsonSanitizeResult sanitize_geojson(const FeatureTable& table, bool repair) {
  GeojsonSanitizeResult res;
  res.table.extra = table.extra;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const FeatureRow& row = table.rows[i];
    const std::string id = "feature:" + std::to_string(i);
    if (!row.image_filename) {
      res.rows_dropped.push_back({id, "missing-field:image_filename"});
      continue;
    }
    if (!row.class_id) {
      res.rows_dropped.push_back({id, "missing-field:class_id"});
      continue;
    }
    if (row.geometry_state == GeometryState::kMissing) {
      res.geometries_dropped.push_back({id, "missing"});
      continue;
    }
    if (row.geometry_state == GeometryState::kEmpty) {
      res.geometries_dropped.push_back({id, "empty"});
      continue;
    }
    const geom::Issue issue = geom::find_issue(row.geometry);
    if (issue == geom::Issue::kNone) {
      res.table.rows.push_back(row);
      continue;
    }
    if (!repair) {
      res.table.rows.push_back(row);
      continue;
    }
    FeatureRow fixed = row;
    fixed.geometry = geom::repair_even_odd(row.geometry);
    if (geom::is_empty(fixed.geometry) || geom::find_issue(fixed.geometry) != geom::Issue::kNone) {
      res.geometries_dropped.push_back({id, "invalid:" + std::string(geom::to_string(issue))});
      continue;
    }
    res.geometries_fixed.push_back({id, std::string(geom::to_string(issue))});
    res.table.rows.push_back(std::move(fixed));
  }
  return res;
}

namespace {

void copy_tree(const fs::path& from, const fs::path& to, const std::set<fs::path>& skip_relative) {
  fs::create_directories(to);
  for (const auto& entry : fs::recursive_directory_iterator(from)) {
    const fs::path rel = entry.path().lexically_relative(from);
    if (skip_relative.contains(rel)) continue;
    if (entry.is_directory()) {
      fs::create_directories(to / rel);
    } else if (entry.is_regular_file()) {
      fs::create_directories((to / rel).parent_path());
      fs::copy_file(entry.path(), to / rel, fs::copy_options::overwrite_existing);
    }
  }
}

void prepare_output(const DatasetHandle& ds, const fs::path& out, bool overwrite) {
  const fs::path abs_out = fs::absolute(out).lexically_normal();
  if (abs_out == ds.data_path) throw Error(Errc::kValidation, "output path must differ from the source dataset");
  if (fs::exists(abs_out) && !fs::is_empty(abs_out)) {
    if (!overwrite) throw Error(Errc::kDestinationExists, abs_out.string() + " exists (use overwrite)");
    fs::remove_all(abs_out);
  }
  fs::create_directories(abs_out);
}

}  // namespace

SanityReport run_sanity(const DatasetHandle& ds, const fs::path& out, const SanityOptions& options) {
  const SanityFlags& flags = options.flags;
  if (!flags.any()) throw Error(Errc::kValidation, "at least one sanity flag must be enabled");

  SanityReport report;
  std::set<fs::path> skip_images;  // relative to images_dir
  if (flags.image_validity) {
    report.invalid_images = check_image_files(ds, options.jobs);
    for (const auto& e : report.invalid_images) skip_images.insert(fs::path(e.id_or_path));
  }
  const auto all = ds.all_files();
  if (!all.empty() && skip_images.size() == all.size()) {
    throw Error(Errc::kEmptyResult, "every image of " + ds.data_path.string() + " was removed");
  }

  std::optional<CocoDocument> coco;
  bool coco_changed = false;
  if (ds.coco_annotations) {
    CocoDocument doc = load_coco(*ds.coco_annotations);
    if (flags.image_validity && !skip_images.empty()) {
      std::set<std::int64_t> removed_ids;
      std::vector<CocoImage> kept;
      for (const auto& im : doc.images) {
        auto path = resolve_image(ds, im.file_name);
        const bool invalid = path && path->lexically_normal().string().starts_with(ds.images_dir.string()) &&
                             skip_images.contains(path->lexically_relative(ds.images_dir));
        if (invalid) {
          removed_ids.insert(im.id);
        } else {
          kept.push_back(im);
        }
      }
      if (!removed_ids.empty()) {
        doc.images = std::move(kept);
        std::vector<CocoAnnotation> anns;
        for (const auto& a : doc.annotations) {
          if (removed_ids.contains(a.image_id)) {
            report.annotations_dropped.push_back({std::to_string(a.id), "image-removed"});
          } else {
            anns.push_back(a);
          }
        }
        doc.annotations = std::move(anns);
        coco_changed = true;
      }
    }
    if (flags.dedupe) {
      auto res = dedupe_images(doc);
      report.duplicates = std::move(res.removed);
      coco_changed |= !report.duplicates.empty();
      doc = std::move(res.doc);
    }
    if (flags.dims_fix) {
      auto res = fix_image_dims(doc, ds);
      report.dims_fixed = std::move(res.fixed);
      for (auto& w : res.unreadable) report.warnings.push_back(std::move(w));
      coco_changed |= !report.dims_fixed.empty();
      doc = std::move(res.doc);
    }
    if (flags.annotation_integrity) {
      const auto issues = check_annotation_integrity(doc);
      std::map<std::int64_t, std::string> drop;
      for (const auto& is : issues) {
        auto [it, inserted] = drop.emplace(is.annotation_id, is.issue);
        if (!inserted) it->second += "," + is.issue;
      }
      if (!drop.empty()) {
        std::vector<CocoAnnotation> anns;
        for (const auto& a : doc.annotations) {
          if (auto it = drop.find(a.id); it != drop.end()) {
            report.annotations_dropped.push_back({std::to_string(a.id), it->second});
          } else {
            anns.push_back(a);
          }
        }
        doc.annotations = std::move(anns);
        coco_changed = true;
      }
    }
    coco = std::move(doc);
  }

  std::optional<FeatureTable> geo;
  if (ds.geojson_annotations && (flags.geojson_clean || flags.geometry_repair)) {
    FeatureTable table = load_geojson(*ds.geojson_annotations);
    if (flags.geojson_clean) {
      auto res = sanitize_geojson(table, flags.geometry_repair);
      for (auto& e : res.rows_dropped) report.annotations_dropped.push_back(std::move(e));
      report.geometries_fixed = std::move(res.geometries_fixed);
      report.geometries_dropped = std::move(res.geometries_dropped);
      table = std::move(res.table);
    } else {
      // Repair only: keep every row, fix what can be fixed.
      for (std::size_t i = 0; i < table.rows.size(); ++i) {
        auto& row = table.rows[i];
        if (row.geometry_state != GeometryState::kPresent) continue;
        const auto issue = geom::find_issue(row.geometry);
        if (issue == geom::Issue::kNone) continue;
        auto fixed = geom::repair_even_odd(row.geometry);
        if (!geom::is_empty(fixed) && geom::find_issue(fixed) == geom::Issue::kNone) {
          row.geometry = std::move(fixed);
          report.geometries_fixed.push_back({"feature:" + std::to_string(i), std::string(geom::to_string(issue))});
        }
      }
    }
    geo = std::move(table);
  }

  prepare_output(ds, out, options.overwrite);
  const fs::path abs_out = fs::absolute(out).lexically_normal();
  report.output_path = abs_out;

  // Root-level files and subdirectories other than the images folder.
  for (const auto& entry : fs::directory_iterator(ds.data_path)) {
    const std::string name = entry.path().filename().string();
    if (entry.path() == ds.images_dir || name == kSanityReportFile) continue;
    if (entry.is_directory()) {
      copy_tree(entry.path(), abs_out / name, {});
    } else if (entry.is_regular_file()) {
      if (coco && ds.coco_annotations && entry.path() == *ds.coco_annotations && coco_changed) {
        write_coco(*coco, abs_out / name);
      } else if (geo && ds.geojson_annotations && entry.path() == *ds.geojson_annotations) {
        write_geojson(*geo, abs_out / name);
      } else {
        fs::copy_file(entry.path(), abs_out / name, fs::copy_options::overwrite_existing);
      }
    }
  }
  copy_tree(ds.images_dir, abs_out / ds.images_dir.filename(), skip_images);

  write_file_atomic(abs_out / kSanityReportFile, to_json(report).dump(2));
  return report;
}

}  // namespace iqh
