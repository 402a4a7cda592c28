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

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "iqh/corpus.hpp"
#include "iqh/image.hpp"
#include "iqh/util.hpp"

namespace iqh::test {

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "iqh_test_XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline Image make_gray(int w, int h, const std::function<double(int, int)>& f) {
  Image img(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<std::uint16_t>(std::clamp(std::lround(f(x, y)), 0L, 255L));
  return img;
}

/// Textured RGB image: smooth gradients plus seeded noise, so lossy codecs
/// have something to lose.
inline Image make_textured_rgb(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  Image img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = 128.0 + 60.0 * std::sin(0.21 * x + 0.7 * c) * std::cos(0.17 * y) + u(rng);
        img.at(x, y, c) = static_cast<std::uint16_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  return img;
}

/// `<parent>/<name>/images/img_NN.png` with one box annotation each, plus
/// annotations.json. Returns the dataset directory.
inline std::filesystem::path make_coco_dataset(const std::filesystem::path& parent, const std::string& name, int count,
                                               int w = 48, int h = 40,
                                               const std::function<Image(int)>& image_for = {}) {
  const auto root = parent / name;
  std::filesystem::create_directories(root / "images");
  json images = json::array(), anns = json::array();
  for (int i = 0; i < count; ++i) {
    const std::string file = "img_" + std::string(i < 10 ? "0" : "") + std::to_string(i) + ".png";
    write_image(root / "images" / file, image_for ? image_for(i) : make_textured_rgb(w, h, 1000 + i));
    images.push_back({{"id", i + 1}, {"file_name", file}, {"width", w}, {"height", h}});
    anns.push_back({{"id", i + 1},
                    {"image_id", i + 1},
                    {"category_id", 1 + i % 2},
                    {"bbox", {4, 5, 10 + i % 3, 12}},
                    {"area", (10 + i % 3) * 12},
                    {"iscrowd", 0}});
  }
  const json doc = {{"images", images},
                    {"annotations", anns},
                    {"categories", {{{"id", 1}, {"name", "car"}}, {{"id", 2}, {"name", "tree"}}}}};
  write_file_atomic(root / "annotations.json", doc.dump(2));
  return root;
}

/// COCO + GeoJSON dataset with one defect of each kind: a duplicated
/// file_name, a truncated PNG, a wrong width/height entry, an annotation of
/// a missing image and a self-intersecting (bow-tie) polygon.
inline std::filesystem::path make_defective_dataset(const std::filesystem::path& parent) {
  const auto root = parent / "defective";
  std::filesystem::create_directories(root / "images");
  write_image(root / "images/a.png", make_textured_rgb(32, 24, 1));
  write_image(root / "images/b.png", make_textured_rgb(30, 20, 2));
  write_image(root / "images/c.png", make_textured_rgb(32, 24, 3));
  auto bytes = read_bytes(root / "images/c.png");
  bytes.resize(bytes.size() * 2 / 3);
  write_bytes(root / "images/c.png", bytes);

  const json doc = json::parse(R"({
    "images": [
      {"id": 1, "file_name": "a.png", "width": 32, "height": 24},
      {"id": 2, "file_name": "b.png", "width": 64, "height": 64},
      {"id": 3, "file_name": "c.png", "width": 32, "height": 24},
      {"id": 4, "file_name": "a.png", "width": 32, "height": 24}
    ],
    "annotations": [
      {"id": 1, "image_id": 1, "category_id": 1, "bbox": [2, 2, 10, 8], "area": 80, "iscrowd": 0},
      {"id": 2, "image_id": 2, "category_id": 1, "bbox": [1, 1, 12, 10], "area": 120, "iscrowd": 0},
      {"id": 3, "image_id": 99, "category_id": 1, "bbox": [1, 1, 5, 5], "area": 25, "iscrowd": 0}
    ],
    "categories": [{"id": 1, "name": "car"}]
  })");
  write_file_atomic(root / "annotations.json", doc.dump(2));

  const json geo = json::parse(R"({"type": "FeatureCollection", "features": [
    {"type": "Feature", "properties": {"image_filename": "a.png", "class_id": "1"},
     "geometry": {"type": "Polygon", "coordinates": [[[0,0],[4,4],[4,0],[0,4],[0,0]]]}},
    {"type": "Feature", "properties": {"image_filename": "b.png", "class_id": "1"},
     "geometry": {"type": "Polygon", "coordinates": [[[0,0],[6,0],[6,3],[0,3],[0,0]]]}}
  ]})");
  write_file_atomic(root / "labels.geojson", geo.dump(2));
  return root;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Point-sampled edge through the image centre, tilted `tilt_deg` from the
/// vertical axis (or from the horizontal one when `horizontal`), blurred by
/// a Gaussian of `sigma_b` pixels: lo + (hi - lo) * Phi(distance / sigma_b).
inline Image slanted_edge(int size, double tilt_deg, double sigma_b, bool horizontal = false, double lo = 50.0,
                         double hi = 200.0) {
  const double t = tilt_deg * M_PI / 180.0;
  const double c = (size - 1) / 2.0;
  return make_gray(size, size, [&](int x, int y) {
    const double dx = x - c, dy = y - c;
    const double d = horizontal ? dy * std::cos(t) - dx * std::sin(t) : dx * std::cos(t) - dy * std::sin(t);
    return lo + (hi - lo) * normal_cdf(d / sigma_b);
  });
}

/// Constant image plus rounded Gaussian noise, clamped to 8 bits.
inline Image noisy_constant(int w, int h, double level, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  return make_gray(w, h, [&](int, int) { return level + n(rng); });
}

}  // namespace iqh::test
