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

#include "iqh/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "iqh/error.hpp"
#include "iqh/image.hpp"

namespace iqh {

namespace {

std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool is_reserved_file(const std::string& name) {
  return name == kSanityReportFile || name == kModifierLogFile || name == kModifierDigestFile ||
         name == "stats.json";
}

// First non-whitespace character of a file, or '\0'.
char first_significant_char(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char c = '\0';
  while (in.get(c)) {
    if (!std::isspace(static_cast<unsigned char>(c))) return c;
  }
  return '\0';
}

std::string join_paths(const std::vector<fs::path>& paths) {
  std::string out;
  for (const auto& p : paths) {
    if (!out.empty()) out += ", ";
    out += p.string();
  }
  return out;
}

std::vector<fs::path> list_files(const fs::path& root, bool images_only) {
  std::vector<fs::path> out;
  if (!fs::is_directory(root)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = entry.path().lexically_relative(root);
    if (rel.filename().string().starts_with(".")) continue;
    if (images_only && !is_image_extension(lower_extension(rel))) continue;
    out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  return out;
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) throw Error(Errc::kSchema, "missing field " + where + "." + key);
  return *it;
}

std::int64_t require_int(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number()) throw Error(Errc::kSchema, where + "." + key + " is not a number");
  if (v.is_number_float()) return static_cast<std::int64_t>(v.get<double>());
  return v.get<std::int64_t>();
}

double require_double(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number()) throw Error(Errc::kSchema, where + "." + key + " is not a number");
  return v.get<double>();
}

BBox parse_bbox(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 4) throw Error(Errc::kSchema, where + ".bbox must be [x, y, w, h]");
  for (const auto& x : v)
    if (!x.is_number()) throw Error(Errc::kSchema, where + ".bbox holds a non-number");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
}

json extras(const json& obj, std::initializer_list<const char*> known) {
  json out = json::object();
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return it.key() == k; }) == known.end()) {
      out[it.key()] = it.value();
    }
  }
  return out;
}

void merge_into(json& target, const json& extra) {
  for (auto it = extra.begin(); it != extra.end(); ++it) target[it.key()] = it.value();
}

}  // namespace

std::vector<fs::path> DatasetHandle::image_files() const { return list_files(images_dir, true); }

std::vector<fs::path> DatasetHandle::all_files() const { return list_files(images_dir, false); }

DatasetHandle discover(const fs::path& input) {
  fs::path path = fs::absolute(input).lexically_normal();
  if (path.filename().empty()) path = path.parent_path();
  if (!fs::is_directory(path)) throw Error(Errc::kIo, "dataset directory not found: " + input.string());

  std::vector<fs::path> subdirs, coco, geojson, dets;
  for (const auto& entry : fs::directory_iterator(path)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with(".")) continue;
    if (entry.is_directory()) {
      subdirs.push_back(entry.path());
    } else if (entry.is_regular_file() && !is_reserved_file(name)) {
      const std::string ext = lower_extension(entry.path());
      if (ext == "geojson") {
        geojson.push_back(entry.path());
      } else if (ext == "json") {
        (first_significant_char(entry.path()) == '[' ? dets : coco).push_back(entry.path());
      }
    }
  }
  std::sort(subdirs.begin(), subdirs.end());
  for (auto* group : {&coco, &geojson, &dets}) std::sort(group->begin(), group->end());

  DatasetHandle h;
  h.data_path = path;
  h.parent_folder = path.parent_path();
  std::vector<fs::path> candidates;
  for (const auto& d : subdirs) {
    const std::string name = d.filename().string();
    if (name == "masks") h.mask_dir = d;
    if (lowercase(name).find("mask") == std::string::npos) candidates.push_back(d);
  }
  if (candidates.empty()) throw Error(Errc::kNoImagesDir, "no images subdirectory in " + path.string());
  if (candidates.size() > 1) {
    log().warn("{}: several image directory candidates, using {}", path.string(),
               candidates.front().filename().string());
  }
  h.images_dir = candidates.front();

  auto bind = [&](std::vector<fs::path>& group, std::optional<fs::path>& slot, const char* what) {
    if (group.size() > 1) {
      throw Error(Errc::kAmbiguousAnnotations, std::string("several ") + what + " files: " + join_paths(group));
    }
    if (!group.empty()) slot = group.front();
  };
  bind(coco, h.coco_annotations, "COCO annotation");
  bind(geojson, h.geojson_annotations, "GeoJSON annotation");
  bind(dets, h.detections, "detection");
  h.params["ds_name"] = path.filename().string();
  return h;
}

std::string derived_name(std::string_view ds_name, std::string_view modifier_name) {
  if (modifier_name.empty()) throw Error(Errc::kInvalidModifierName, "empty modifier name");
  if (modifier_name.find_first_of("/\\") != std::string_view::npos || modifier_name == "." ||
      modifier_name == "..") {
    throw Error(Errc::kInvalidModifierName, "modifier name contains a path separator: " + std::string(modifier_name));
  }
  std::string out(ds_name);
  out += '#';
  out += modifier_name;
  return out;
}

CocoDocument parse_coco(const json& doc) {
  if (!doc.is_object()) throw Error(Errc::kSchema, "COCO document must be an object");
  CocoDocument out;
  const json& images = require(doc, "images", "$");
  if (!images.is_array()) throw Error(Errc::kSchema, "images must be an array");
  for (std::size_t i = 0; i < images.size(); ++i) {
    const json& im = images[i];
    const std::string where = "images[" + std::to_string(i) + "]";
    CocoImage ci;
    ci.id = require_int(im, "id", where);
    const json& fn = require(im, "file_name", where);
    if (!fn.is_string()) throw Error(Errc::kSchema, where + ".file_name is not a string");
    ci.file_name = fn.get<std::string>();
    if (im.contains("width") && im["width"].is_number()) ci.width = im["width"].get<std::int64_t>();
    if (im.contains("height") && im["height"].is_number()) ci.height = im["height"].get<std::int64_t>();
    ci.extra = extras(im, {"id", "file_name", "width", "height"});
    out.images.push_back(std::move(ci));
  }
  if (auto it = doc.find("annotations"); it != doc.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(Errc::kSchema, "annotations must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& a = (*it)[i];
      const std::string where = "annotations[" + std::to_string(i) + "]";
      CocoAnnotation ca;
      ca.id = require_int(a, "id", where);
      ca.image_id = require_int(a, "image_id", where);
      ca.category_id = require_int(a, "category_id", where);
      ca.bbox = parse_bbox(require(a, "bbox", where), where);
      ca.area = a.contains("area") && a["area"].is_number() ? a["area"].get<double>() : ca.bbox.w * ca.bbox.h;
      ca.iscrowd = a.contains("iscrowd") && a["iscrowd"].is_number() ? a["iscrowd"].get<int>() : 0;
      bool seg_consumed = false;
      if (auto s = a.find("segmentation"); s != a.end() && s->is_array()) {
        std::vector<std::vector<double>> polys;
        bool ok = true;
        for (const auto& poly : *s) {
          if (!poly.is_array()) { ok = false; break; }
          std::vector<double> coords;
          for (const auto& c : poly) {
            if (!c.is_number()) { ok = false; break; }
            coords.push_back(c.get<double>());
          }
          polys.push_back(std::move(coords));
        }
        if (ok) {
          ca.segmentation = std::move(polys);
          seg_consumed = true;
        }
      }
      ca.extra = seg_consumed ? extras(a, {"id", "image_id", "category_id", "bbox", "area", "iscrowd", "segmentation"})
                              : extras(a, {"id", "image_id", "category_id", "bbox", "area", "iscrowd"});
      out.annotations.push_back(std::move(ca));
    }
  }
  if (auto it = doc.find("categories"); it != doc.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(Errc::kSchema, "categories must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& c = (*it)[i];
      const std::string where = "categories[" + std::to_string(i) + "]";
      CocoCategory cc;
      cc.id = require_int(c, "id", where);
      if (c.contains("name") && c["name"].is_string()) cc.name = c["name"].get<std::string>();
      cc.extra = extras(c, {"id", "name"});
      out.categories.push_back(std::move(cc));
    }
  }
  out.extra = extras(doc, {"images", "annotations", "categories"});
  return out;
}

CocoDocument load_coco(const fs::path& path) {
  try {
    return parse_coco(load_json(path));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

json to_json(const CocoDocument& doc) {
  json out = json::object();
  merge_into(out, doc.extra);
  json images = json::array();
  for (const auto& im : doc.images) {
    json j = {{"id", im.id}, {"file_name", im.file_name}, {"width", im.width}, {"height", im.height}};
    merge_into(j, im.extra);
    images.push_back(std::move(j));
  }
  json anns = json::array();
  for (const auto& a : doc.annotations) {
    json j = {{"id", a.id},
              {"image_id", a.image_id},
              {"category_id", a.category_id},
              {"bbox", {a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h}},
              {"area", a.area},
              {"iscrowd", a.iscrowd}};
    if (a.segmentation) j["segmentation"] = *a.segmentation;
    merge_into(j, a.extra);
    anns.push_back(std::move(j));
  }
  json cats = json::array();
  for (const auto& c : doc.categories) {
    json j = {{"id", c.id}, {"name", c.name}};
    merge_into(j, c.extra);
    cats.push_back(std::move(j));
  }
  out["images"] = std::move(images);
  out["annotations"] = std::move(anns);
  out["categories"] = std::move(cats);
  return out;
}

void write_coco(const CocoDocument& doc, const fs::path& path) {
  write_file_atomic(path, to_json(doc).dump(2));
}

geom::MultiPolygon annotation_shape(const CocoAnnotation& ann) {
  geom::MultiPolygon mp;
  if (ann.segmentation) {
    for (const auto& flat : *ann.segmentation) {
      geom::Polygon poly;
      for (std::size_t i = 0; i + 1 < flat.size(); i += 2) poly.outer.push_back({flat[i], flat[i + 1]});
      if (poly.outer.size() >= 3) {
        if (geom::signed_area(poly.outer) < 0) std::reverse(poly.outer.begin(), poly.outer.end());
        mp.push_back(std::move(poly));
      }
    }
  }
  if (mp.empty()) {
    const BBox& b = ann.bbox;
    mp.push_back({{{b.x, b.y}, {b.x + b.w, b.y}, {b.x + b.w, b.y + b.h}, {b.x, b.y + b.h}}, {}});
  }
  return mp;
}

std::vector<DetectionRecord> parse_detections(const json& doc) {
  if (!doc.is_array()) throw Error(Errc::kSchema, "detections must be a JSON array");
  std::vector<DetectionRecord> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& d = doc[i];
    const std::string where = "[" + std::to_string(i) + "]";
    if (!d.is_object()) throw Error(Errc::kSchema, where + " is not an object");
    DetectionRecord r;
    r.image_id = require_int(d, "image_id", where);
    r.category_id = require_int(d, "category_id", where);
    r.bbox = parse_bbox(require(d, "bbox", where), where);
    r.score = require_double(d, "score", where);
    r.id = d.contains("id") && d["id"].is_number() ? d["id"].get<std::int64_t>() : static_cast<std::int64_t>(i + 1);
    r.area = d.contains("area") && d["area"].is_number() ? d["area"].get<double>() : r.bbox.w * r.bbox.h;
    r.iscrowd = d.contains("iscrowd") && d["iscrowd"].is_number() ? d["iscrowd"].get<int>() : 0;
    if (!(r.score >= 0.0 && r.score <= 1.0)) {
      throw Error(Errc::kValidation, where + ": score out of range [0, 1]: " + format_double(r.score));
    }
    if (!(r.bbox.w >= 0.0 && r.bbox.h >= 0.0)) throw Error(Errc::kValidation, where + ": negative bbox size");
    out.push_back(r);
  }
  return out;
}

std::vector<DetectionRecord> load_detections(const fs::path& path) {
  try {
    return parse_detections(load_json(path));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

json to_json(const std::vector<DetectionRecord>& dets) {
  json out = json::array();
  for (const auto& d : dets) {
    out.push_back({{"image_id", d.image_id},
                   {"iscrowd", d.iscrowd},
                   {"bbox", {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}},
                   {"area", d.area},
                   {"category_id", d.category_id},
                   {"id", d.id},
                   {"score", d.score}});
  }
  return out;
}

namespace {

geom::Ring parse_ring(const json& coords, const std::string& where) {
  if (!coords.is_array()) throw Error(Errc::kSchema, where + ": ring must be an array");
  geom::Ring ring;
  for (const auto& pt : coords) {
    if (!pt.is_array() || pt.size() < 2 || !pt[0].is_number() || !pt[1].is_number()) {
      throw Error(Errc::kSchema, where + ": position must be [x, y]");
    }
    ring.push_back({pt[0].get<double>(), pt[1].get<double>()});
  }
  if (ring.size() >= 2 && ring.front() == ring.back()) ring.pop_back();
  return ring;
}

geom::Polygon parse_polygon(const json& coords, const std::string& where) {
  if (!coords.is_array()) throw Error(Errc::kSchema, where + ": polygon must be an array of rings");
  geom::Polygon poly;
  for (std::size_t r = 0; r < coords.size(); ++r) {
    geom::Ring ring = parse_ring(coords[r], where);
    if (r == 0) {
      poly.outer = std::move(ring);
    } else {
      poly.holes.push_back(std::move(ring));
    }
  }
  return poly;
}

json ring_to_json(const geom::Ring& ring) {
  json out = json::array();
  for (const auto& p : ring) out.push_back({p.x, p.y});
  if (!ring.empty()) out.push_back({ring.front().x, ring.front().y});
  return out;
}

std::optional<std::string> scalar_property(const json& props, const char* key) {
  auto it = props.find(key);
  if (it == props.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_float() && !std::isfinite(it->get<double>())) return std::nullopt;
  if (it->is_number() || it->is_boolean()) return format_scalar(*it);
  return std::nullopt;
}

}  // namespace

FeatureTable parse_geojson(const json& doc) {
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection") {
    throw Error(Errc::kSchema, "GeoJSON top level must be a FeatureCollection");
  }
  const json& features = require(doc, "features", "$");
  if (!features.is_array()) throw Error(Errc::kSchema, "features must be an array");
  FeatureTable table;
  table.extra = extras(doc, {"type", "features"});
  for (std::size_t i = 0; i < features.size(); ++i) {
    const json& f = features[i];
    const std::string where = "features[" + std::to_string(i) + "]";
    if (!f.is_object()) throw Error(Errc::kSchema, where + " is not an object");
    FeatureRow row;
    if (auto p = f.find("properties"); p != f.end() && p->is_object()) row.properties = *p;
    row.image_filename = scalar_property(row.properties, "image_filename");
    row.class_id = scalar_property(row.properties, "class_id");
    auto g = f.find("geometry");
    if (g == f.end() || g->is_null()) {
      row.geometry_state = GeometryState::kMissing;
    } else {
      const std::string type = g->value("type", "");
      const json coords = g->contains("coordinates") ? (*g)["coordinates"] : json::array();
      if (type == "Polygon") {
        geom::Polygon poly = parse_polygon(coords, where);
        if (!poly.outer.empty() || !poly.holes.empty()) row.geometry.push_back(std::move(poly));
      } else if (type == "MultiPolygon") {
        if (!coords.is_array()) throw Error(Errc::kSchema, where + ": MultiPolygon coordinates must be an array");
        for (const auto& pc : coords) {
          geom::Polygon poly = parse_polygon(pc, where);
          if (!poly.outer.empty() || !poly.holes.empty()) row.geometry.push_back(std::move(poly));
        }
      } else {
        throw Error(Errc::kSchema, where + ": unsupported geometry type " + (type.empty() ? "<none>" : type));
      }
      row.geometry_state = geom::is_empty(row.geometry) ? GeometryState::kEmpty : GeometryState::kPresent;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

FeatureTable load_geojson(const fs::path& path) {
  try {
    return parse_geojson(load_json(path));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

json to_json(const FeatureTable& table) {
  json out = {{"type", "FeatureCollection"}};
  merge_into(out, table.extra);
  json features = json::array();
  for (const auto& row : table.rows) {
    json geometry;  // null unless present
    if (row.geometry_state != GeometryState::kMissing) {
      json coords = json::array();
      for (const auto& poly : row.geometry) {
        json rings = json::array();
        rings.push_back(ring_to_json(poly.outer));
        for (const auto& h : poly.holes) rings.push_back(ring_to_json(h));
        coords.push_back(std::move(rings));
      }
      if (row.geometry.size() == 1) {
        geometry = {{"type", "Polygon"}, {"coordinates", coords[0]}};
      } else {
        geometry = {{"type", "MultiPolygon"}, {"coordinates", coords}};
      }
    }
    features.push_back({{"type", "Feature"}, {"properties", row.properties}, {"geometry", geometry}});
  }
  out["features"] = std::move(features);
  return out;
}

void write_geojson(const FeatureTable& table, const fs::path& path) {
  write_file_atomic(path, to_json(table).dump(2));
}

std::vector<fs::path> load_generated_images(const fs::path& output_dir, const fs::path& listing) {
  const json doc = load_json(listing);
  const json* arr = &doc;
  if (doc.is_object()) {
    arr = nullptr;
    for (auto it = doc.begin(); it != doc.end(); ++it)
      if (it->is_array()) arr = &*it;
  }
  if (!arr || !arr->is_array()) throw Error(Errc::kSchema, listing.string() + ": expected an array of image paths");
  std::vector<fs::path> out;
  for (const auto& v : *arr) {
    if (!v.is_string()) throw Error(Errc::kSchema, listing.string() + ": image paths must be strings");
    fs::path rel = fs::path(v.get<std::string>()).lexically_normal();
    if (rel.is_absolute() || rel.empty() || *rel.begin() == "..") {
      throw Error(Errc::kValidation, "generated image path escapes the output directory: " + rel.string());
    }
    if (!fs::is_regular_file(output_dir / rel)) {
      throw Error(Errc::kValidation, "generated image not found: " + (output_dir / rel).string());
    }
    out.push_back(rel);
  }
  return out;
}

}  // namespace iqh
