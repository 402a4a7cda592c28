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
#include <random>

#include "iqh/error.hpp"
#include "iqh/modifiers.hpp"
#include "iqh/qmetrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace iqh;

using namespace iqh::test;

TEST(Psnr, Analytic) {
  const Image a(16, 16, 1, 8, 0), b(16, 16, 1, 8, 255);
  EXPECT_DOUBLE_EQ(psnr(a, b), 0.0);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_THROW(psnr(a, Image(8, 8, 1)), Error);
}

TEST(PsnrProperty, OracleAndSymmetry) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto a = random_image(64, 64, 1 + 2 * (i % 2), rng), b = random_image(64, 64, 1 + 2 * (i % 2), rng);
    EXPECT_NEAR(psnr(a, b), psnr_oracle(a, b), 1e-9);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
  }
}

TEST(Ssim, IdentityNegativeAndOracle) {
  std::mt19937_64 rng(2);
  const auto tex = test::make_textured_rgb(48, 48, 5);
  EXPECT_NEAR(ssim(tex, tex), 1.0, 1e-12);
  const auto bars = test::make_gray(48, 48, [](int x, int) { return (x / 4) % 2 ? 230 : 20; });
  Image neg = bars;
  for (auto& v : neg.samples()) v = static_cast<std::uint16_t>(255 - v);
  EXPECT_LT(ssim(bars, neg), 0.1);
  for (int i = 0; i < 5; ++i) {
    const auto a = random_image(32, 32, 3, rng), b = random_image(32, 32, 3, rng);
    EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-6);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  }
  EXPECT_THROW(ssim(Image(8, 8, 1), Image(8, 8, 1)), Error);
}

TEST(SnrHb, CalibratedNoise) {
  const auto img = test::noisy_constant(512, 512, 120, 6, 1234);
  const auto e = snr_hb(img);
  EXPECT_GE(e.value_linear, 18.0);
  EXPECT_LE(e.value_linear, 22.0);
  EXPECT_NEAR(e.value_db, 20 * std::log10(e.value_linear), 1e-12);
}

TEST(SnrHb, ConstantImageUsesFloor) {
  const Image flat(64, 64, 1, 8, 120);
  EXPECT_NEAR(snr_hb(flat).value_linear, 120.0 / kSigmaFloor, 1e-9);
  EXPECT_THROW(snr_hb(Image(8, 8, 1)), Error);
}

TEST(SnrHbProperty, ScaleInvariance) {
  const auto img = test::noisy_constant(256, 256, 60, 5, 77);
  Image doubled = img;
  for (auto& v : doubled.samples()) v = static_cast<std::uint16_t>(v * 2);
  const double a = snr_hb(img).value_linear, b = snr_hb(doubled).value_linear;
  EXPECT_NEAR(b / a, 1.0, 0.02);
}

TEST(SnrHa, AgreesWithHbAndRejectsCheckerboards) {
  const auto img = test::noisy_constant(512, 512, 120, 6, 1234);
  const auto ha = snr_ha(img);
  ASSERT_TRUE(ha);
  EXPECT_NEAR(ha->value_linear / snr_hb(img).value_linear, 1.0, 0.15);
  for (int period : {1, 4}) {
    const auto board =
        test::make_gray(128, 128, [&](int x, int y) { return ((x / period + y / period) % 2) ? 230 : 25; });
    EXPECT_FALSE(snr_ha(board)) << "square " << period;
  }
}

TEST(SnrHa, CompositeMeasuresFlatHalf) {
  // Flat noisy half next to structured texture (checkerboard, then a grating).
  const std::vector<std::function<double(int, int)>> textures{
      [](int x, int y) { return ((x / 4 + y / 4) % 2) ? 200.0 : 40.0; },
      [](int x, int y) { return 120.0 + 90.0 * std::sin(1.3 * x) * std::cos(0.9 * y); }};
  for (std::size_t k = 0; k < textures.size(); ++k) {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> n(0.0, 6.0);
    const auto img = test::make_gray(256, 256, [&](int x, int y) { return x < 128 ? 120.0 + n(rng) : textures[k](x, y); });
    const auto e = snr_ha(img);
    ASSERT_TRUE(e) << "texture " << k;
    EXPECT_NEAR(e->value_linear, 20.0, 3.0) << "texture " << k;
    EXPECT_GE(e->support, 400.0);
  }
}

TEST(Sharpness, GaussianEdgeModel) {
  const auto img = test::slanted_edge(128, 5.0, 1.0);
  const auto r = sharpness(img);
  ASSERT_TRUE(r.vertical.rer);
  const double rer = test::normal_cdf(0.5) - test::normal_cdf(-0.5);
  EXPECT_NEAR(*r.vertical.rer, rer, 0.1 * rer);
  EXPECT_NEAR(*r.vertical.fwhm, 2.3548, 0.1 * 2.3548);
  ASSERT_TRUE(r.vertical.mtf_nyquist);
  EXPECT_NEAR(*r.vertical.mtf_nyquist, std::exp(-2 * M_PI * M_PI * 0.25), 0.02);
  EXPECT_FALSE(r.horizontal.rer);
}

TEST(Sharpness, HorizontalEdgeIsClassified) {
  const auto r = sharpness(test::slanted_edge(128, 6.0, 0.8, true));
  EXPECT_TRUE(r.horizontal.rer);
  EXPECT_FALSE(r.vertical.rer);
}

TEST(SharpnessProperty, BlurOrdering) {
  std::vector<DirectionSharpness> d;
  for (double s : {0.5, 1.0, 2.0}) d.push_back(sharpness(test::slanted_edge(128, 5.0, s)).vertical);
  for (std::size_t i = 1; i < d.size(); ++i) {
    EXPECT_LT(*d[i].rer, *d[i - 1].rer);
    EXPECT_GT(*d[i].fwhm, *d[i - 1].fwhm);
    EXPECT_LT(*d[i].mtf_nyquist, *d[i - 1].mtf_nyquist);
  }
}

TEST(Sharpness, FlatImageHasNoEdges) {
  try {
    sharpness(Image(64, 64, 1, 8, 90));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNoEdgesFound);
  }
}

TEST(MetricNames, Outputs) {
  EXPECT_EQ(metric_outputs("psnr"), std::vector<std::string>{"psnr"});
  EXPECT_EQ(metric_outputs("sharpness").size(), 9u);
  EXPECT_TRUE(is_full_reference("ssim"));
  EXPECT_FALSE(is_full_reference("snr_hb"));
  EXPECT_THROW(metric_outputs("bogus"), Error);
}

TEST(DatasetMetrics, SelfPsnrIsInfinite) {
  test::TempDir tmp;
  const auto root = test::make_coco_dataset(tmp.path(), "ds", 3);
  const auto r = apply_quality_metric(discover(root), {"psnr"}, discover(root));
  ASSERT_EQ(r.size(), 1u);
  EXPECT_TRUE(std::isinf(r[0].aggregate));
  for (const auto& [k, v] : r[0].per_image) EXPECT_TRUE(v && std::isinf(*v));
  EXPECT_EQ(metric_result_from_json(to_json(r[0])).per_image.size(), 3u);
}

TEST(DatasetMetrics, JpegQualityOrdering) {
  test::TempDir tmp;
  const auto root = test::make_coco_dataset(tmp.path(), "ds", 3, 64, 64);
  const auto reg = ModifierRegistry::with_builtins();
  const auto q10 = apply_modifier(discover(root), reg.make_spec("jpeg_quality", {{"quality", 10}}), 0, reg);
  const auto q90 = apply_modifier(discover(root), reg.make_spec("jpeg_quality", {{"quality", 90}}), 0, reg);
  const double a10 = apply_quality_metric(q10.new_handle, {"psnr"}, discover(root))[0].aggregate;
  const double a90 = apply_quality_metric(q90.new_handle, {"psnr"}, discover(root))[0].aggregate;
  EXPECT_GT(a90, a10);
}

TEST(DatasetMetrics, UndefinedImagesAreCounted) {
  test::TempDir tmp;
  const auto root = test::make_coco_dataset(tmp.path(), "ds", 3, 128, 128, [](int i) {
    if (i == 1) return test::make_gray(128, 128, [](int x, int y) { return ((x + y) % 2) ? 230 : 25; });
    return test::noisy_constant(128, 128, 100, 5, 10 + i);
  });
  const auto r = apply_quality_metric(discover(root), {"snr_ha"});
  EXPECT_EQ(r[0].count_defined, 2u);
  EXPECT_FALSE(r[0].per_image.at("img_01.png"));
}

// Aggregates do not depend on file order.
TEST(DatasetMetricsProperty, PermutationInvariance) {
  test::TempDir tmp;
  const auto root = test::make_coco_dataset(tmp.path(), "ds", 4, 64, 64);
  const auto ds = discover(root);
  auto files = ds.image_files();
  const auto a = evaluate_image_set(ds.images_dir, files, {"snr_hb"}, std::nullopt)[0];
  std::reverse(files.begin(), files.end());
  const auto b = evaluate_image_set(ds.images_dir, files, {"snr_hb"}, std::nullopt)[0];
  EXPECT_EQ(a.aggregate, b.aggregate);
  EXPECT_EQ(a.per_image, b.per_image);
}
