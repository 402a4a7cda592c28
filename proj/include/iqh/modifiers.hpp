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
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "iqh/corpus.hpp"
#include "iqh/image.hpp"

namespace iqh {

// Pixel transforms. Alpha (4th channel) is left untouched by quantize/noise.
Image jpeg_quality_transform(const Image& img, int quality);
/// The JPEG stream itself: baseline, 4:2:0 below quality 95, 4:4:4 from 95 up.
std::vector<std::uint8_t> jpeg_quality_encode(const Image& img, int quality);
Image quantize_transform(const Image& img, int bits);
Image gaussian_noise_transform(const Image& img, double sigma, std::mt19937_64& rng);
Image rescale_transform(const Image& img, double scale);

/// Per-image RNG seed derived from (seed, relative path).
std::uint64_t image_seed(std::uint64_t seed, const std::string& relative_path);

struct TransformContext {
  std::uint64_t seed = 0;
  std::string relative_path;  // relative to the images directory, '/' separated
};

struct TransformOutput {
  Image image;
  // Encoded file content when the kind dictates the storage format (JPEG).
  std::optional<std::vector<std::uint8_t>> encoded;
};

using ImageTransform = std::function<Image(const Image&, const TransformContext&)>;

struct ModifierKind {
  std::function<void(const json& params)> validate;
  std::function<std::string(const json& params)> name;
  std::function<TransformOutput(const Image&, const json& params, const TransformContext&)> apply;
};

struct ModifierSpec {
  std::string kind;
  json params = json::object();
  std::string name;  // e.g. "jpg85_modifier"
  friend bool operator==(const ModifierSpec&, const ModifierSpec&) = default;
};

/// Kind name -> implementation. Read-only once experiments start.
class ModifierRegistry {
 public:
  /// jpeg_quality, quantize, gaussian_noise, rescale and identity.
  static ModifierRegistry with_builtins();

  /// Throws Error(kDuplicateKind) when `kind` is taken.
  void register_kind(const std::string& kind, ModifierKind impl);
  /// Parameterless-or-not per-image transform; named `<kind>[_<key><value>...]_modifier`.
  void register_custom(const std::string& kind, ImageTransform transform);

  bool contains(const std::string& kind) const { return kinds_.contains(kind); }
  /// Throws Error(kUnknownKind).
  const ModifierKind& at(const std::string& kind) const;
  std::vector<std::string> kinds() const;

  /// Validates params (Error(kValidation)) and derives the name.
  ModifierSpec make_spec(const std::string& kind, const json& params = json::object()) const;

 private:
  std::map<std::string, ModifierKind> kinds_;
};

struct ImageLogEntry {
  std::string path;
  std::uint64_t bytes_before = 0;
  std::uint64_t bytes_after = 0;
  std::string status;  // transformed, identity, or copied: <reason>
};

struct ModifierOutcome {
  DatasetHandle new_handle;
  std::size_t images_processed = 0;
  std::uint64_t bytes_before = 0;
  std::uint64_t bytes_after = 0;
  std::vector<ImageLogEntry> per_image_log;  // ordered by relative path
  std::vector<std::string> warnings;
};

json to_json(const ModifierOutcome& outcome, const ModifierSpec& spec, std::uint64_t seed);

struct ApplyOptions {
  bool overwrite = false;
  std::size_t jobs = 1;
};

/// Writes `<parent>/<ds_name>#<modifier name>` with every image transformed,
/// relative paths kept, other files copied verbatim and `modifier_log.json`
/// at the root. The tree is assembled in a temporary sibling and renamed.
ModifierOutcome apply_modifier(const DatasetHandle& ds, const ModifierSpec& spec, std::uint64_t seed,
                               const ModifierRegistry& registry, const ApplyOptions& options = {});

}  // namespace iqh
