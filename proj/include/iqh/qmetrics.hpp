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
#include <optional>
#include <string>
#include <vector>

#include "iqh/corpus.hpp"
#include "iqh/image.hpp"

namespace iqh {

/// 10 log10(L^2 / MSE) over all channels; +inf for identical images.
/// Throws kShapeMismatch when size, channels or depth differ.
double psnr(const Image& ref, const Image& test);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

/// Mean SSIM over every fully contained 11x11 Gaussian window, averaged over
/// the colour channels. Throws kShapeMismatch / kTooSmall.
double ssim(const Image& ref, const Image& test);

enum class SnrMethod { kHomogeneousBlocks, kHomogeneousArea };

struct SnrEstimate {
  SnrMethod method = SnrMethod::kHomogeneousBlocks;
  double value_linear = 0.0;  // mean / sigma
  double value_db = 0.0;      // 20 log10(value_linear)
  double support = 0.0;       // blocks kept (HB) or pixels used (HA)
};

inline const double kSigmaFloor = 0.28867513459481287;  // 1/sqrt(12), one quantisation level

struct SnrHbOptions {
  int block = 16;
  double keep_fraction = 0.5;
};

/// Homogeneous blocks on the luma plane. Throws kTooSmall when the image is
/// smaller than one block.
SnrEstimate snr_hb(const Image& img, const SnrHbOptions& options = {});
SnrEstimate snr_hb(const Plane& luma, const SnrHbOptions& options = {});

struct SnrHaOptions {
  double min_area = 400.0;
  double sigma_tol = 1.0;
};

/// Homogeneous areas grown from low-gradient seeds; nullopt when no region
/// reaches min_area.
std::optional<SnrEstimate> snr_ha(const Image& img, const SnrHaOptions& options = {});
std::optional<SnrEstimate> snr_ha(const Plane& luma, const SnrHaOptions& options = {});

struct DirectionSharpness {
  std::optional<double> rer;
  std::optional<double> fwhm;
  std::optional<double> mtf_nyquist;
  std::size_t edge_count = 0;
  bool mtf_clipped = false;  // some edge's MTF left [0, 1] and was clipped to [0, 1.05]
};

struct SharpnessResult {
  DirectionSharpness horizontal;  // edge normal within 22.5 deg of the y axis
  DirectionSharpness vertical;    // edge normal within 22.5 deg of the x axis
  DirectionSharpness other;
};

/// Per-edge measurement, exposed for diagnostics.
struct EdgeMeasurement {
  double normal_angle_deg = 0.0;  // of the normal against the x axis, [0, 180)
  double tilt_deg = 0.0;          // of the edge against the nearest axis
  double length = 0.0;
  double rms_residual = 0.0;
  double rer = 0.0;
  double fwhm = 0.0;
  double mtf_nyquist = 0.0;
  bool mtf_clipped = false;
};

struct SharpnessOptions {
  std::size_t min_edge_pixels = 20;
  double max_rms_residual = 0.5;
  double min_tilt_deg = 2.0;
  double max_tilt_deg = 25.0;
  double half_band = 8.0;
  double bin_width = 0.25;
};

std::vector<EdgeMeasurement> measure_edges(const Plane& luma, const SharpnessOptions& options = {});

/// Slanted-edge RER / FWHM / MTF at Nyquist per direction.
/// Throws kNoEdgesFound when no edge qualifies.
SharpnessResult sharpness(const Image& img, const SharpnessOptions& options = {});
SharpnessResult sharpness(const Plane& luma, const SharpnessOptions& options = {});

struct MetricSpec {
  std::string name;  // psnr, ssim, snr_hb, snr_ha, sharpness
  json params = json::object();
};

bool is_full_reference(const std::string& metric);

/// Result names a metric expands to: sharpness yields rer_/fwhm_/mtf_nyq_ x
/// horizontal/vertical/other, the others their own name.
std::vector<std::string> metric_outputs(const std::string& metric);

struct MetricResult {
  std::string metric_name;
  std::map<std::string, std::optional<double>> per_image;  // relative path -> value
  double aggregate = 0.0;  // mean over defined values; NaN when none
  std::size_t count_defined = 0;
  std::vector<std::string> warnings;
};

/// Non-finite numbers are written as the strings "inf", "-inf" and "nan".
json to_json(const MetricResult& r);
MetricResult metric_result_from_json(const json& doc);

/// Evaluates `metric` on every image of `ds` (against the same relative path in
/// `ref` for full-reference metrics). Per-image failures leave that image
/// undefined and add a warning. Throws kMissingReference, kEmptyDataset.
std::vector<MetricResult> apply_quality_metric(const DatasetHandle& ds, const MetricSpec& metric,
                                               const std::optional<DatasetHandle>& ref = std::nullopt,
                                               std::size_t jobs = 1);

/// Same over explicit files below `root`. The reference of `root/rel` is
/// `ref_root/rel`, or `ref_root/<file name>` when that is the only match.
std::vector<MetricResult> evaluate_image_set(const fs::path& root, const std::vector<fs::path>& files,
                                             const MetricSpec& metric, const std::optional<fs::path>& ref_root,
                                             std::size_t jobs = 1);

}  // namespace iqh
