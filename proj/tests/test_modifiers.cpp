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

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "iqh/error.hpp"
#include "iqh/modifiers.hpp"
#include "iqh/qmetrics.hpp"
#include "support.hpp"

using namespace iqh;

namespace {

Image smooth_gradient(int w, int h) {
  return test::make_gray(w, h, [&](int x, int y) { return 40.0 + 150.0 * (x + y) / (w + h); });
}

double mse_oracle(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.samples().size(); ++i) {
    const double d = double(a.samples()[i]) - double(b.samples()[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.samples().size());
}

std::set<fs::path> relative_files(const fs::path& root) {
  std::set<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.insert(fs::relative(e.path(), root));
  return out;
}

}  // namespace

TEST(Naming, BuiltinNames) {
  const auto reg = ModifierRegistry::with_builtins();
  EXPECT_EQ(reg.make_spec("jpeg_quality", {{"quality", 85}}).name, "jpg85_modifier");
  EXPECT_EQ(reg.make_spec("quantize", {{"bits", 5}}).name, "quant5_modifier");
  EXPECT_EQ(reg.make_spec("gaussian_noise", {{"sigma", 1.5}}).name, "noise1_5_modifier");
  EXPECT_EQ(reg.make_spec("gaussian_noise", {{"sigma", 2}}).name, "noise2_modifier");
  EXPECT_EQ(reg.make_spec("rescale", {{"scale", 0.5}}).name, "rescale50_modifier");
  EXPECT_EQ(reg.make_spec("identity").name, "identity_modifier");
  EXPECT_THROW(reg.make_spec("jpeg_quality", {{"quality", 0}}), Error);
  EXPECT_THROW(reg.make_spec("quantize", {{"bits", 9}}), Error);
  EXPECT_THROW(reg.make_spec("nope"), Error);
}

TEST(JpegTransform, QualityBehaviour) {
  const auto img = smooth_gradient(64, 64);
  EXPECT_GT(psnr(img, jpeg_quality_transform(img, 100)), 40.0);
  const auto tex = test::make_textured_rgb(64, 64, 4);
  EXPECT_LT(jpeg_quality_encode(tex, 10).size(), jpeg_quality_encode(tex, 85).size());
  EXPECT_THROW(jpeg_quality_encode(Image(8, 8, 2), 50), Error);
}

TEST(Quantize, LevelSets) {
  const auto img = test::make_gray(64, 4, [](int x, int y) { return x * 4 + y; });
  const auto q1 = quantize_transform(img, 1), q2 = quantize_transform(img, 2);
  std::set<int> one, two;
  for (auto v : q1.samples()) one.insert(v);
  for (auto v : q2.samples()) two.insert(v);
  EXPECT_EQ(one, (std::set<int>{0, 255}));
  for (int v : two) EXPECT_TRUE(v == 0 || v == 85 || v == 170 || v == 255) << v;
  EXPECT_EQ(quantize_transform(img, 8), img);
}

TEST(Noise, IdentityStatisticsDeterminism) {
  const Image flat(256, 256, 1, 8, 120);
  std::mt19937_64 a(42), b(7), c(7);
  EXPECT_EQ(gaussian_noise_transform(flat, 0.0, a), flat);
  const auto n1 = gaussian_noise_transform(flat, 6.0, a);
  const auto n2 = gaussian_noise_transform(flat, 6.0, b);
  EXPECT_EQ(gaussian_noise_transform(flat, 6.0, c), n2);
  double s = 0.0, s2 = 0.0;
  for (auto v : n1.samples()) {
    const double d = double(v) - 120.0;
    s += d;
    s2 += d * d;
  }
  const double n = double(n1.samples().size());
  const double sd = std::sqrt((s2 - s * s / n) / (n - 1));
  EXPECT_GE(sd, 5.4);
  EXPECT_LE(sd, 6.6);
}

TEST(Rescale, IdentityCheckerboardConstant) {
  const auto tex = test::make_textured_rgb(40, 30, 9);
  const auto same = rescale_transform(tex, 1.0);
  for (std::size_t i = 0; i < tex.samples().size(); ++i)
    EXPECT_LE(std::abs(int(tex.samples()[i]) - int(same.samples()[i])), 1);

  const auto board = test::make_gray(64, 64, [](int x, int y) { return ((x + y) % 2) ? 255 : 0; });
  const auto half = rescale_transform(board, 0.5);
  EXPECT_EQ(half.width(), 64);
  for (auto v : half.samples()) EXPECT_NEAR(double(v), 127.5, 2.0);

  const Image flat(33, 17, 1, 8, 77);
  EXPECT_EQ(rescale_transform(flat, 0.5), flat);
}

// Severity ordering on one natural-looking image.
TEST(ModifierProperty, SeverityMonotonicity) {
  const auto img = test::make_textured_rgb(96, 96, 21);
  double prev = -1.0;
  for (int q : {10, 30, 50, 70, 90}) {
    const double p = psnr(img, jpeg_quality_transform(img, q));
    EXPECT_GE(p, prev) << "q=" << q;
    prev = p;
  }
  prev = -1.0;
  for (int b : {2, 3, 4, 5, 6, 7}) {
    const double p = psnr(img, quantize_transform(img, b));
    EXPECT_GE(p, prev) << "bits=" << b;
    prev = p;
  }
  prev = std::numeric_limits<double>::infinity();
  for (double s : {0.0, 1.0, 2.0, 4.0, 8.0}) {
    std::mt19937_64 rng(3);
    const double p = psnr(img, gaussian_noise_transform(img, s, rng));
    EXPECT_LE(p, prev) << "sigma=" << s;
    prev = p;
  }
}

TEST(ApplyModifier, SiblingLayoutAndAlignment) {
  test::TempDir tmp;
  const auto root = test::make_coco_dataset(tmp.path(), "ds_coco_dataset", 4);
  fs::create_directories(root / "images/sub");
  write_image(root / "images/sub/extra.png", test::make_textured_rgb(16, 16, 77));
  write_file_atomic(root / "images/readme.txt", "not an image");
  const auto reg = ModifierRegistry::with_builtins();
  const auto spec = reg.make_spec("jpeg_quality", {{"quality", 85}});
  const auto out = apply_modifier(discover(root), spec, 1, reg);
  const fs::path dest = tmp / "ds_coco_dataset#jpg85_modifier";
  EXPECT_EQ(out.new_handle.data_path, dest);
  EXPECT_TRUE(fs::is_directory(dest / "images"));
  EXPECT_EQ(relative_files(dest / "images"), relative_files(root / "images"));
  EXPECT_EQ(read_file(dest / "annotations.json"), read_file(root / "annotations.json"));
  EXPECT_EQ(read_file(dest / "images/readme.txt"), "not an image");
  EXPECT_EQ(out.images_processed, 5u);
  EXPECT_EQ(out.new_handle.params.at("modifier"), "jpg85_modifier");
  EXPECT_EQ(out.new_handle.params.at("source_ds_name"), "ds_coco_dataset");
  EXPECT_TRUE(fs::exists(dest / "modifier_log.json"));
  EXPECT_EQ(sniff_format(read_bytes(dest / "images/img_00.png")), ImageFormat::kJpeg);

  try {
    apply_modifier(discover(root), spec, 1, reg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kDestinationExists);
  }
}

TEST(ApplyModifier, IdentityCasesAreBitIdentical) {
  test::TempDir tmp;
  const auto root = test::make_coco_dataset(tmp.path(), "ds", 3);
  const auto reg = ModifierRegistry::with_builtins();
  for (const auto& spec : {reg.make_spec("gaussian_noise", {{"sigma", 0}}), reg.make_spec("quantize", {{"bits", 8}}),
                           reg.make_spec("identity")}) {
    const auto out = apply_modifier(discover(root), spec, 5, reg);
    for (const auto& rel : discover(root).image_files())
      EXPECT_EQ(read_file(root / "images" / rel), read_file(out.new_handle.images_dir / rel)) << spec.name;
  }
  EXPECT_TRUE(fs::exists(tmp / "ds#identity_modifier/images"));
}

TEST(ApplyModifier, DeterministicAcrossJobCounts) {
  test::TempDir tmp;
  const auto root = test::make_coco_dataset(tmp.path(), "ds", 6);
  const auto reg = ModifierRegistry::with_builtins();
  const auto spec = reg.make_spec("gaussian_noise", {{"sigma", 3}});
  apply_modifier(discover(root), spec, 9, reg, {false, 1});
  const auto first = relative_files(tmp / "ds#noise3_modifier/images");
  std::map<fs::path, std::string> bytes;
  for (const auto& f : first) bytes[f] = read_file(tmp / "ds#noise3_modifier/images" / f);
  apply_modifier(discover(root), spec, 9, reg, {true, 3});
  for (const auto& f : first) EXPECT_EQ(read_file(tmp / "ds#noise3_modifier/images" / f), bytes[f]);
}

TEST(Registry, CustomAndDuplicate) {
  test::TempDir tmp;
  const auto root = test::make_coco_dataset(tmp.path(), "ds", 2);
  auto reg = ModifierRegistry::with_builtins();
  reg.register_custom("invert", [](const Image& img, const TransformContext&) {
    Image out = img;
    for (auto& v : out.samples()) v = static_cast<std::uint16_t>(255 - v);
    return out;
  });
  try {
    reg.register_custom("invert", [](const Image& img, const TransformContext&) { return img; });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kDuplicateKind);
  }
  const auto spec = reg.make_spec("invert");
  EXPECT_EQ(spec.name, "invert_modifier");
  const auto out = apply_modifier(discover(root), spec, 0, reg);
  for (const auto& rel : discover(root).image_files()) {
    const auto a = read_image(root / "images" / rel);
    const auto b = read_image(out.new_handle.images_dir / rel);
    for (std::size_t i = 0; i < a.samples().size(); ++i) EXPECT_EQ(b.samples()[i], 255 - a.samples()[i]);
  }
  const auto jpeg = reg.make_spec("jpeg_quality", {{"quality", 50}});
  EXPECT_EQ(derived_name(out.new_handle.name(), jpeg.name), "ds#invert_modifier#jpg50_modifier");
  const auto chained = apply_modifier(out.new_handle, jpeg, 0, reg);
  EXPECT_EQ(chained.new_handle.data_path.filename(), "ds#invert_modifier#jpg50_modifier");
}

TEST(Quantize, MseMatchesOracle) {
  const auto img = test::make_textured_rgb(32, 32, 1);
  const auto q = quantize_transform(img, 3);
  EXPECT_NEAR(psnr(img, q), 10 * std::log10(255.0 * 255.0 / mse_oracle(img, q)), 1e-9);
}
