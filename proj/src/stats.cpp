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

#include "iqh/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "iqh/error.hpp"
#include "iqh/image.hpp"
#include "iqh/svg.hpp"

namespace iqh {

std::size_t Histogram::total() const noexcept {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0}) + underflow + overflow;
}

std::ptrdiff_t Histogram::bin_of(double v) const noexcept {
  if (edges.empty() || v < edges.front()) return -1;
  if (v > edges.back()) return static_cast<std::ptrdiff_t>(counts.size());
  auto it = std::upper_bound(edges.begin(), edges.end(), v);
  const auto idx = std::distance(edges.begin(), it) - 1;
  // The last edge closes the last bin.
  return std::min<std::ptrdiff_t>(idx, static_cast<std::ptrdiff_t>(counts.size()) - 1);
}

Histogram log_histogram(const std::vector<double>& values, double lo, double hi, std::size_t bins) {
  if (!(lo > 0.0) || !(hi > lo) || bins == 0) throw Error(Errc::kValidation, "invalid histogram range");
  Histogram h;
  h.edges.resize(bins + 1);
  const double step = std::log(hi / lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo * std::exp(step * static_cast<double>(i));
  h.edges.front() = lo;
  h.edges.back() = hi;
  h.counts.assign(bins, 0);
  for (double v : values) {
    const auto b = h.bin_of(v);
    if (b < 0) {
      ++h.underflow;
    } else if (b >= static_cast<std::ptrdiff_t>(bins)) {
      ++h.overflow;
    } else {
      ++h.counts[static_cast<std::size_t>(b)];
    }
  }
  return h;
}

Histogram aspect_histogram(const std::vector<double>& ratios) { return log_histogram(ratios, kAspectLo, kAspectHi); }

Histogram area_histogram(const std::vector<double>& areas) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double a : areas) {
    if (a > 0.0 && std::isfinite(a)) lo = std::min(lo, a), hi = std::max(hi, a);
  }
  if (!std::isfinite(lo)) lo = 1.0, hi = 2.0;
  if (hi <= lo) lo /= 2.0, hi *= 2.0;
  return log_histogram(areas, lo, hi);
}

ImageSizeStats image_size_stats(const DatasetHandle& ds, std::size_t jobs) {
  const auto files = ds.image_files();
  std::vector<std::optional<std::pair<int, int>>> dims(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    try {
      if (auto img = decode_image(read_bytes(ds.images_dir / files[i]))) dims[i] = {img->width(), img->height()};
    } catch (const Error&) {
    }
  });
  ImageSizeStats st;
  double sw = 0.0, sh = 0.0;
  for (const auto& d : dims) {
    if (!d) continue;
    st.sizes.push_back(*d);
    sw += d->first;
    sh += d->second;
  }
  st.count = st.sizes.size();
  if (st.count == 0) throw Error(Errc::kNoImages, "no decodable images in " + ds.images_dir.string());
  st.mean_width = sw / static_cast<double>(st.count);
  st.mean_height = sh / static_cast<double>(st.count);
  return st;
}

std::map<std::int64_t, std::size_t> class_histogram(const CocoDocument& doc) {
  std::map<std::int64_t, std::size_t> h;
  for (const auto& c : doc.categories) h[c.id] = 0;
  for (const auto& a : doc.annotations) ++h[a.category_id];
  return h;
}

AspectAreaHistograms aspect_area_histograms(const CocoDocument& doc) {
  std::vector<double> ia, iar, ba, bar;
  for (const auto& im : doc.images) {
    if (im.width <= 0 || im.height <= 0) continue;
    ia.push_back(static_cast<double>(im.width) / static_cast<double>(im.height));
    iar.push_back(static_cast<double>(im.width) * static_cast<double>(im.height));
  }
  for (const auto& a : doc.annotations) {
    if (!(a.bbox.w > 0.0) || !(a.bbox.h > 0.0)) continue;
    ba.push_back(a.bbox.w / a.bbox.h);
    bar.push_back(a.bbox.w * a.bbox.h);
  }
  return {aspect_histogram(ia), aspect_histogram(ba), area_histogram(iar), area_histogram(bar)};
}

geom::RotatedRect fit_rotated_bbox(const geom::MultiPolygon& poly) {
  const auto pts = geom::vertices(poly);
  if (pts.size() < 3) throw Error(Errc::kDegenerateGeometry, "rotated box needs at least 3 vertices");
  return geom::min_area_rect(pts);
}

geom::Descriptors polygon_descriptors(const geom::MultiPolygon& poly) {
  // Invalid shapes are measured by their even-odd cover.
  const auto issue = geom::find_issue(poly);
  if (issue == geom::Issue::kNone || issue == geom::Issue::kNonFinite || issue == geom::Issue::kTooFewPoints)
    return geom::describe(poly);
  return geom::describe(geom::repair_even_odd(poly));
}

FieldSummary field_summary(const FeatureTable& table, const std::string& field) {
  bool seen = false;
  FieldSummary s;
  double sum = 0.0;
  for (const auto& row : table.rows) {
    auto it = row.properties.find(field);
    if (it == row.properties.end()) continue;
    seen = true;
    if (it->is_null()) continue;
    if (!it->is_number()) throw Error(Errc::kNonNumericField, "field '" + field + "' holds a non-numeric value");
    const double v = it->get<double>();
    if (!std::isfinite(v)) continue;
    if (s.count == 0) s.min = s.max = v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    sum += v;
    ++s.count;
  }
  if (!seen) throw Error(Errc::kUnknownField, "unknown field '" + field + "'");
  if (s.count == 0) throw Error(Errc::kNonNumericField, "field '" + field + "' has no numeric values");
  s.mean = sum / static_cast<double>(s.count);
  return s;
}

namespace {

json hist_to_json(const Histogram& h) {
  return {{"edges", h.edges}, {"counts", h.counts}, {"underflow", h.underflow}, {"overflow", h.overflow}};
}

Histogram hist_from_json(const json& j) {
  Histogram h;
  h.edges = j.at("edges").get<std::vector<double>>();
  h.counts = j.at("counts").get<std::vector<std::size_t>>();
  h.underflow = j.at("underflow").get<std::size_t>();
  h.overflow = j.at("overflow").get<std::size_t>();
  return h;
}

struct ShapeSource {
  std::string id;
  std::string category;
  geom::MultiPolygon shape;
};

std::vector<ShapeSource> collect_shapes(const DatasetHandle& ds, std::optional<CocoDocument>& coco) {
  std::vector<ShapeSource> out;
  if (coco) {
    std::vector<const CocoAnnotation*> anns;
    for (const auto& a : coco->annotations) anns.push_back(&a);
    std::stable_sort(anns.begin(), anns.end(), [](auto* a, auto* b) { return a->id < b->id; });
    for (const auto* a : anns) out.push_back({"ann:" + std::to_string(a->id), std::to_string(a->category_id), annotation_shape(*a)});
  }
  if (ds.geojson_annotations) {
    const auto table = load_geojson(*ds.geojson_annotations);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const auto& row = table.rows[i];
      if (row.geometry_state != GeometryState::kPresent) continue;
      out.push_back({"feature:" + std::to_string(i), row.class_id.value_or(""), row.geometry});
    }
  }
  return out;
}

}  // namespace

json to_json(const StatsReport& r) {
  json classes = json::object();
  for (const auto& [k, v] : r.class_histogram) classes[std::to_string(k)] = v;
  json polys = json::array();
  for (const auto& p : r.polygon_summaries) {
    polys.push_back({{"id", p.id},
                     {"category", p.category},
                     {"area", p.area},
                     {"centroid", {p.centroid.x, p.centroid.y}},
                     {"compactness", p.compactness}});
  }
  json boxes = json::array();
  for (const auto& b : r.fitted_boxes) {
    boxes.push_back({{"id", b.id},
                     {"axis", {{"w", b.axis_w}, {"h", b.axis_h}}},
                     {"rotated",
                      {{"cx", b.rotated.cx},
                       {"cy", b.rotated.cy},
                       {"w", b.rotated.w},
                       {"h", b.rotated.h},
                       {"angle", b.rotated.angle_deg}}}});
  }
  json fields = json::object();
  for (const auto& [k, s] : r.field_summaries)
    fields[k] = {{"min", s.min}, {"mean", s.mean}, {"max", s.max}, {"count", s.count}};
  return {{"dataset", r.dataset},
          {"images_dir", r.images_dir.string()},
          {"image_files", r.image_files},
          {"image_size", {{"mean_width", r.mean_width}, {"mean_height", r.mean_height}}},
          {"class_histogram", classes},
          {"image_aspect_hist", hist_to_json(r.image_aspect_hist)},
          {"bbox_aspect_hist", hist_to_json(r.bbox_aspect_hist)},
          {"image_area_hist", hist_to_json(r.image_area_hist)},
          {"bbox_area_hist", hist_to_json(r.bbox_area_hist)},
          {"polygon_summaries", polys},
          {"fitted_boxes", boxes},
          {"field_summaries", fields},
          {"warnings", r.warnings}};
}

StatsReport stats_report_from_json(const json& j) {
  StatsReport r;
  r.dataset = j.at("dataset").get<std::string>();
  r.images_dir = j.at("images_dir").get<std::string>();
  r.image_files = j.at("image_files").get<std::vector<std::string>>();
  r.mean_width = j.at("image_size").at("mean_width").get<double>();
  r.mean_height = j.at("image_size").at("mean_height").get<double>();
  for (const auto& [k, v] : j.at("class_histogram").items()) r.class_histogram[std::stoll(k)] = v.get<std::size_t>();
  r.image_aspect_hist = hist_from_json(j.at("image_aspect_hist"));
  r.bbox_aspect_hist = hist_from_json(j.at("bbox_aspect_hist"));
  r.image_area_hist = hist_from_json(j.at("image_area_hist"));
  r.bbox_area_hist = hist_from_json(j.at("bbox_area_hist"));
  for (const auto& p : j.at("polygon_summaries")) {
    r.polygon_summaries.push_back({p.at("id").get<std::string>(), p.at("category").get<std::string>(),
                                   p.at("area").get<double>(),
                                   {p.at("centroid").at(0).get<double>(), p.at("centroid").at(1).get<double>()},
                                   p.at("compactness").get<double>()});
  }
  for (const auto& b : j.at("fitted_boxes")) {
    FittedBox fb;
    fb.id = b.at("id").get<std::string>();
    fb.axis_w = b.at("axis").at("w").get<double>();
    fb.axis_h = b.at("axis").at("h").get<double>();
    const auto& rr = b.at("rotated");
    fb.rotated = {rr.at("cx").get<double>(), rr.at("cy").get<double>(), rr.at("w").get<double>(),
                  rr.at("h").get<double>(), rr.at("angle").get<double>()};
    r.fitted_boxes.push_back(fb);
  }
  for (const auto& [k, s] : j.at("field_summaries").items()) {
    r.field_summaries[k] = {s.at("min").get<double>(), s.at("mean").get<double>(), s.at("max").get<double>(),
                            s.at("count").get<std::size_t>()};
  }
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

StatsReport compute_stats(const DatasetHandle& ds, const StatsOptions& options) {
  StatsReport r;
  r.dataset = ds.name();
  r.images_dir = ds.images_dir;
  for (const auto& f : ds.image_files()) r.image_files.push_back(f.generic_string());

  const ImageSizeStats sizes = image_size_stats(ds, options.jobs);
  r.mean_width = sizes.mean_width;
  r.mean_height = sizes.mean_height;

  std::optional<CocoDocument> coco;
  if (ds.coco_annotations) coco = load_coco(*ds.coco_annotations);
  if (coco) {
    r.class_histogram = class_histogram(*coco);
    auto h = aspect_area_histograms(*coco);
    r.bbox_aspect_hist = std::move(h.bbox_aspect);
    r.bbox_area_hist = std::move(h.bbox_area);
  } else {
    r.bbox_aspect_hist = aspect_histogram({});
    r.bbox_area_hist = area_histogram({});
  }
  // Image histograms come from the decoded files, not declared dimensions.
  std::vector<double> aspects, areas;
  for (const auto& [w, h] : sizes.sizes) {
    aspects.push_back(static_cast<double>(w) / h);
    areas.push_back(static_cast<double>(w) * h);
  }
  r.image_aspect_hist = aspect_histogram(aspects);
  r.image_area_hist = area_histogram(areas);

  const auto shapes = collect_shapes(ds, coco);
  std::vector<std::optional<std::pair<PolygonSummary, FittedBox>>> rows(shapes.size());
  std::vector<std::string> errs(shapes.size());
  parallel_for(shapes.size(), options.jobs, [&](std::size_t i) {
    const auto& s = shapes[i];
    try {
      const auto d = polygon_descriptors(s.shape);
      const auto pts = geom::vertices(s.shape);
      const auto env = geom::envelope(pts);
      FittedBox fb{s.id, env.width(), env.height(), fit_rotated_bbox(s.shape)};
      rows[i] = std::pair{PolygonSummary{s.id, s.category, d.area, d.centroid, d.compactness}, fb};
    } catch (const Error& e) {
      errs[i] = s.id + ": " + e.what();
    }
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]) {
      r.polygon_summaries.push_back(rows[i]->first);
      r.fitted_boxes.push_back(rows[i]->second);
    } else {
      r.warnings.push_back(errs[i]);
    }
  }

  if (ds.geojson_annotations) {
    const auto table = load_geojson(*ds.geojson_annotations);
    std::vector<std::string> fields = options.fields;
    if (fields.empty()) {
      std::set<std::string> keys;
      for (const auto& row : table.rows)
        for (const auto& [k, v] : row.properties.items())
          if (v.is_number()) keys.insert(k);
      fields.assign(keys.begin(), keys.end());
    }
    for (const auto& f : fields) {
      try {
        r.field_summaries[f] = field_summary(table, f);
      } catch (const Error& e) {
        if (!options.fields.empty()) throw;
        r.warnings.push_back(e.what());
      }
    }
  } else if (!options.fields.empty()) {
    throw Error(Errc::kUnknownField, "no GeoJSON table to summarise field '" + options.fields.front() + "'");
  }
  return r;
}

namespace {

std::string hist_svg(const Histogram& h, std::string_view title, std::string_view x_label) {
  std::vector<svg::Bar> bars;
  bars.push_back({fmt::format("<{:.3g}", h.edges.front()), static_cast<double>(h.underflow)});
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    bars.push_back({fmt::format("{:.3g}", h.edges[i]), static_cast<double>(h.counts[i])});
  }
  bars.push_back({fmt::format(">{:.3g}", h.edges.back()), static_cast<double>(h.overflow)});
  return svg::bar_chart(title, bars, x_label, "count");
}

constexpr const char* kHtmlHead =
    "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{}</title>\n"
    "<style>body{{font-family:sans-serif}}table{{border-collapse:collapse}}"
    "td,th{{border:1px solid #ccc;padding:2px 6px;text-align:right}}"
    ".grid{{display:flex;flex-wrap:wrap;gap:8px}}figure{{margin:0;font-size:11px}}</style>\n"
    "</head><body>\n<h1>{}</h1>\n";

const std::vector<std::string> kSummaryColumns = {"id",      "category", "area",  "centroid_x", "centroid_y",
                                                  "compactness", "bbox_w", "bbox_h", "rot_cx",   "rot_cy",
                                                  "rot_w",   "rot_h",    "rot_angle"};

std::string summary_cell(const std::string& col, const PolygonSummary& p, const FittedBox& b) {
  if (col == "id") return svg::escape(p.id);
  if (col == "category") return svg::escape(p.category);
  double v = 0.0;
  if (col == "area") v = p.area;
  else if (col == "centroid_x") v = p.centroid.x;
  else if (col == "centroid_y") v = p.centroid.y;
  else if (col == "compactness") v = p.compactness;
  else if (col == "bbox_w") v = b.axis_w;
  else if (col == "bbox_h") v = b.axis_h;
  else if (col == "rot_cx") v = b.rotated.cx;
  else if (col == "rot_cy") v = b.rotated.cy;
  else if (col == "rot_w") v = b.rotated.w;
  else if (col == "rot_h") v = b.rotated.h;
  else if (col == "rot_angle") v = b.rotated.angle_deg;
  return fmt::format("{:.6g}", v);
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, n);
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates; explicit so the sample is the same on every standard library.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::vector<fs::path> export_report(const StatsReport& r, const fs::path& out, const ExportOptions& options) {
  fs::create_directories(out);
  std::vector<fs::path> written;
  auto emit = [&](const fs::path& p, std::string_view content) {
    write_file_atomic(p, content);
    written.push_back(p);
  };
  emit(out / "stats.json", to_json(r).dump(2));
  emit(out / "image_aspect_hist.svg", hist_svg(r.image_aspect_hist, "Image aspect ratio", "width / height"));
  emit(out / "bbox_aspect_hist.svg", hist_svg(r.bbox_aspect_hist, "Bounding box aspect ratio", "width / height"));
  emit(out / "image_area_hist.svg", hist_svg(r.image_area_hist, "Image area", "pixels^2"));
  emit(out / "bbox_area_hist.svg", hist_svg(r.bbox_area_hist, "Bounding box area", "pixels^2"));

  std::vector<std::string> cols;
  if (options.fields_to_include.empty()) {
    cols = kSummaryColumns;
  } else {
    for (const auto& f : options.fields_to_include) {
      if (std::find(kSummaryColumns.begin(), kSummaryColumns.end(), f) == kSummaryColumns.end())
        throw Error(Errc::kUnknownField, "unknown summary column '" + f + "'");
      cols.push_back(f);
    }
  }
  std::string html = fmt::format(kHtmlHead, "Annotations summary", svg::escape(r.dataset) + " annotations");
  html += fmt::format("<p>Mean image size: {:.2f} x {:.2f}</p>\n<table>\n<tr>", r.mean_width, r.mean_height);
  for (const auto& c : cols) html += "<th>" + c + "</th>";
  html += "</tr>\n";
  for (std::size_t i = 0; i < r.polygon_summaries.size(); ++i) {
    html += "<tr>";
    for (const auto& c : cols) html += "<td>" + summary_cell(c, r.polygon_summaries[i], r.fitted_boxes[i]) + "</td>";
    html += "</tr>\n";
  }
  html += "</table>\n";
  if (!r.field_summaries.empty()) {
    html += "<h2>Fields</h2>\n<table>\n<tr><th>field</th><th>min</th><th>mean</th><th>max</th><th>n</th></tr>\n";
    for (const auto& [k, s] : r.field_summaries)
      html += fmt::format("<tr><td>{}</td><td>{:.6g}</td><td>{:.6g}</td><td>{:.6g}</td><td>{}</td></tr>\n",
                          svg::escape(k), s.min, s.mean, s.max, s.count);
    html += "</table>\n";
  }
  html += "</body></html>\n";
  emit(out / "annots_summary.html", html);

  const auto picks = sample_indices(r.image_files.size(), options.sample, options.seed);
  const fs::path thumbs = out / "thumbs";
  fs::create_directories(thumbs);
  std::string preview = fmt::format(kHtmlHead, "Image preview", svg::escape(r.dataset) + " images");
  preview += "<div class=\"grid\">\n";
  for (std::size_t n = 0; n < picks.size(); ++n) {
    const std::string& rel = r.image_files[picks[n]];
    const std::string name = fmt::format("{:05d}.png", n);
    try {
      Image img = to_8bit(read_image(r.images_dir / rel));
      const int side = std::max(img.width(), img.height());
      if (side > options.thumb_size) {
        const double s = static_cast<double>(options.thumb_size) / side;
        img = resize_box(img, std::max(1, static_cast<int>(std::lround(img.width() * s))),
                         std::max(1, static_cast<int>(std::lround(img.height() * s))));
      }
      write_image(thumbs / name, img);
      written.push_back(thumbs / name);
    } catch (const Error& e) {
      log().warn("thumbnail for {} skipped: {}", rel, e.what());
      continue;
    }
    preview += fmt::format("<figure class=\"thumb\"><img src=\"thumbs/{}\" alt=\"{}\"><figcaption>{}</figcaption></figure>\n",
                           name, svg::escape(rel), svg::escape(rel));
  }
  preview += "</div>\n</body></html>\n";
  emit(out / "imgs_preview.html", preview);
  return written;
}

}  // namespace iqh
