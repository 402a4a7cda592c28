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

#include "iqh/modifiers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unistd.h>

#include "iqh/error.hpp"

namespace iqh {

namespace {

int colour_channels(const Image& img) { return img.channels() == 4 ? 3 : img.channels(); }

std::int64_t integer_param(const json& params, const char* key, std::int64_t lo, std::int64_t hi) {
  if (!params.is_object() || !params.contains(key)) throw Error(Errc::kValidation, std::string("missing parameter '") + key + "'");
  const json& v = params.at(key);
  if (!v.is_number()) throw Error(Errc::kValidation, std::string("parameter '") + key + "' must be a number");
  const double d = v.get<double>();
  if (d != std::floor(d) || d < static_cast<double>(lo) || d > static_cast<double>(hi))
    throw Error(Errc::kValidation, std::string("parameter '") + key + "' must be an integer in [" + std::to_string(lo) +
                                       ", " + std::to_string(hi) + "]");
  return static_cast<std::int64_t>(d);
}

double number_param(const json& params, const char* key) {
  if (!params.is_object() || !params.contains(key)) throw Error(Errc::kValidation, std::string("missing parameter '") + key + "'");
  const json& v = params.at(key);
  if (!v.is_number()) throw Error(Errc::kValidation, std::string("parameter '") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw Error(Errc::kValidation, std::string("parameter '") + key + "' must be finite");
  return d;
}

// 2.5 -> "2_5"; trailing noise from binary fractions is rounded away.
std::string name_number(double v) {
  std::string s = format_double(std::round(v * 1e6) / 1e6);
  std::replace(s.begin(), s.end(), '.', '_');
  return s;
}

std::string sanitize_token(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    out += ok ? c : (c == '.' ? '_' : '-');
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> jpeg_quality_encode(const Image& img, int quality) {
  if (quality < 1 || quality > 100) throw Error(Errc::kValidation, "JPEG quality must be in [1, 100]");
  if (img.channels() != 1 && img.channels() != 3)
    throw Error(Errc::kUnsupportedChannelCount, "JPEG needs 1 or 3 channels, got " + std::to_string(img.channels()));
  return encode_jpeg(to_8bit(img), JpegOptions{quality, quality < 95});
}

Image jpeg_quality_transform(const Image& img, int quality) {
  const auto bytes = jpeg_quality_encode(img, quality);
  auto out = decode_image(bytes);
  if (!out) throw Error(Errc::kIo, "JPEG round trip failed to decode");
  return *out;
}

Image quantize_transform(const Image& img, int bits) {
  if (bits < 1 || bits > 8) throw Error(Errc::kValidation, "bits must be in [1, 8]");
  const double maxv = img.max_value();
  const double step = maxv / static_cast<double>((1 << bits) - 1);
  Image out = img;
  const int cc = colour_channels(img);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < cc; ++c) {
        const double q = std::round(img.at(x, y, c) / step) * step;
        out.at(x, y, c) = static_cast<std::uint16_t>(std::clamp(std::round(q), 0.0, maxv));
      }
  return out;
}

Image gaussian_noise_transform(const Image& img, double sigma, std::mt19937_64& rng) {
  if (!(sigma >= 0.0)) throw Error(Errc::kValidation, "sigma must be non-negative");
  if (sigma == 0.0) return img;
  std::normal_distribution<double> noise(0.0, sigma);
  const double maxv = img.max_value();
  Image out = img;
  const int cc = colour_channels(img);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < cc; ++c) {
        const double v = img.at(x, y, c) + noise(rng);
        out.at(x, y, c) = static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, maxv));
      }
  return out;
}

Image rescale_transform(const Image& img, double scale) {
  if (!(scale > 0.0) || scale > 1.0) throw Error(Errc::kValidation, "scale must be in (0, 1]");
  const int w = img.width(), h = img.height(), ch = img.channels();
  // Guard against 0.5 * 28 = 14.000000000000002 style ceilings.
  auto reduced = [&](int dim) { return std::max(1, static_cast<int>(std::ceil(scale * dim - 1e-9))); };
  const int sw = reduced(w), sh = reduced(h);
  const auto small = box_resample(img, sw, sh);
  auto src_at = [&](int x, int y, int c) {
    return small[(static_cast<std::size_t>(y) * static_cast<std::size_t>(sw) + static_cast<std::size_t>(x)) * ch + c];
  };
  Image out(w, h, ch, img.bit_depth());
  const double maxv = img.max_value();
  for (int y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sh / h - 0.5, 0.0, sh - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, sh - 1);
    const double ty = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sw / w - 0.5, 0.0, sw - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, sw - 1);
      const double tx = fx - x0;
      for (int c = 0; c < ch; ++c) {
        const double top = src_at(x0, y0, c) * (1 - tx) + src_at(x1, y0, c) * tx;
        const double bot = src_at(x0, y1, c) * (1 - tx) + src_at(x1, y1, c) * tx;
        const double v = top * (1 - ty) + bot * ty;
        out.at(x, y, c) = static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, maxv));
      }
    }
  }
  return out;
}

std::uint64_t image_seed(std::uint64_t seed, const std::string& relative_path) {
  return stable_hash64(std::to_string(seed) + "\n" + relative_path);
}

ModifierRegistry ModifierRegistry::with_builtins() {
  ModifierRegistry r;
  r.register_kind("jpeg_quality",
                  {[](const json& p) { integer_param(p, "quality", 1, 100); },
                   [](const json& p) { return "jpg" + std::to_string(integer_param(p, "quality", 1, 100)) + "_modifier"; },
                   [](const Image& img, const json& p, const TransformContext&) {
                     auto bytes = jpeg_quality_encode(img, static_cast<int>(integer_param(p, "quality", 1, 100)));
                     auto decoded = decode_image(bytes);
                     if (!decoded) throw Error(Errc::kIo, "JPEG round trip failed to decode");
                     return TransformOutput{std::move(*decoded), std::move(bytes)};
                   }});
  r.register_kind("quantize",
                  {[](const json& p) { integer_param(p, "bits", 1, 8); },
                   [](const json& p) { return "quant" + std::to_string(integer_param(p, "bits", 1, 8)) + "_modifier"; },
                   [](const Image& img, const json& p, const TransformContext&) {
                     return TransformOutput{quantize_transform(img, static_cast<int>(integer_param(p, "bits", 1, 8))), {}};
                   }});
  r.register_kind("gaussian_noise",
                  {[](const json& p) {
                     if (number_param(p, "sigma") < 0.0) throw Error(Errc::kValidation, "sigma must be non-negative");
                   },
                   [](const json& p) { return "noise" + name_number(number_param(p, "sigma")) + "_modifier"; },
                   [](const Image& img, const json& p, const TransformContext& ctx) {
                     std::mt19937_64 rng(image_seed(ctx.seed, ctx.relative_path));
                     return TransformOutput{gaussian_noise_transform(img, number_param(p, "sigma"), rng), {}};
                   }});
  r.register_kind("rescale",
                  {[](const json& p) {
                     const double s = number_param(p, "scale");
                     if (!(s > 0.0) || s > 1.0) throw Error(Errc::kValidation, "scale must be in (0, 1]");
                   },
                   [](const json& p) { return "rescale" + name_number(number_param(p, "scale") * 100.0) + "_modifier"; },
                   [](const Image& img, const json& p, const TransformContext&) {
                     return TransformOutput{rescale_transform(img, number_param(p, "scale")), {}};
                   }});
  r.register_custom("identity", [](const Image& img, const TransformContext&) { return img; });
  return r;
}

void ModifierRegistry::register_kind(const std::string& kind, ModifierKind impl) {
  if (kind.empty() || sanitize_token(kind) != kind)
    throw Error(Errc::kInvalidModifierName, "modifier kind must be alphanumeric: '" + kind + "'");
  if (kinds_.contains(kind)) throw Error(Errc::kDuplicateKind, "modifier kind already registered: " + kind);
  kinds_.emplace(kind, std::move(impl));
}

void ModifierRegistry::register_custom(const std::string& kind, ImageTransform transform) {
  ModifierKind impl;
  impl.validate = [](const json& p) {
    if (!p.is_null() && !p.is_object()) throw Error(Errc::kValidation, "modifier params must be an object");
  };
  impl.name = [kind](const json& p) {
    std::string name = kind;
    if (p.is_object()) {
      std::map<std::string, std::string> sorted;
      for (const auto& [k, v] : p.items()) sorted[k] = format_scalar(v);
      for (const auto& [k, v] : sorted) name += "_" + sanitize_token(k) + sanitize_token(v);
    }
    return name + "_modifier";
  };
  impl.apply = [fn = std::move(transform)](const Image& img, const json&, const TransformContext& ctx) {
    return TransformOutput{fn(img, ctx), {}};
  };
  register_kind(kind, std::move(impl));
}

const ModifierKind& ModifierRegistry::at(const std::string& kind) const {
  auto it = kinds_.find(kind);
  if (it == kinds_.end()) throw Error(Errc::kUnknownKind, "unknown modifier kind: " + kind);
  return it->second;
}

std::vector<std::string> ModifierRegistry::kinds() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : kinds_) out.push_back(k);
  return out;
}

ModifierSpec ModifierRegistry::make_spec(const std::string& kind, const json& params) const {
  const ModifierKind& k = at(kind);
  const json p = params.is_null() ? json::object() : params;
  k.validate(p);
  return {kind, p, k.name(p)};
}

json to_json(const ModifierOutcome& o, const ModifierSpec& spec, std::uint64_t seed) {
  json log = json::array();
  for (const auto& e : o.per_image_log)
    log.push_back({{"path", e.path}, {"bytes_before", e.bytes_before}, {"bytes_after", e.bytes_after}, {"status", e.status}});
  return {{"modifier", spec.name},
          {"kind", spec.kind},
          {"params", spec.params},
          {"seed", seed},
          {"data_path", o.new_handle.data_path.string()},
          {"images_processed", o.images_processed},
          {"bytes_before", o.bytes_before},
          {"bytes_after", o.bytes_after},
          {"per_image_log", log},
          {"warnings", o.warnings}};
}

namespace {

std::atomic<std::uint64_t> staging_counter{0};

std::vector<std::uint8_t> encode_like_source(const Image& img, ImageFormat source) {
  switch (source) {
    case ImageFormat::kTiff: return encode_lossless(img, ImageFormat::kTiff);
    // Re-encoding a JPEG source at the top quality keeps the file a JPEG.
    case ImageFormat::kJpeg: return encode_jpeg(to_8bit(img), JpegOptions{100, false});
    default: return encode_lossless(img, ImageFormat::kPng);
  }
}

void copy_entry(const fs::path& from, const fs::path& to) {
  if (fs::is_directory(from)) {
    fs::copy(from, to, fs::copy_options::recursive);
  } else {
    fs::copy_file(from, to);
  }
}

}  // namespace

ModifierOutcome apply_modifier(const DatasetHandle& ds, const ModifierSpec& spec, std::uint64_t seed,
                               const ModifierRegistry& registry, const ApplyOptions& options) {
  const ModifierKind& kind = registry.at(spec.kind);
  kind.validate(spec.params);
  const fs::path dest = ds.parent_folder / derived_name(ds.name(), spec.name);
  if (fs::exists(dest) && !options.overwrite)
    throw Error(Errc::kDestinationExists, dest.string() + " already exists (use overwrite)");

  const fs::path staging = ds.parent_folder / (".tmp." + dest.filename().string() + "." + std::to_string(::getpid()) +
                                              "." + std::to_string(staging_counter.fetch_add(1)));
  fs::remove_all(staging);
  fs::create_directories(staging);
  try {
    for (const auto& entry : fs::directory_iterator(ds.data_path)) {
      const std::string name = entry.path().filename().string();
      if (entry.path() == ds.images_dir || name == kModifierLogFile || name == kModifierDigestFile) continue;
      copy_entry(entry.path(), staging / name);
    }
    const fs::path out_images = staging / ds.images_dir.filename();
    fs::create_directories(out_images);

    const auto images = ds.image_files();
    const auto all = ds.all_files();
    for (const auto& rel : all) {
      if (std::binary_search(images.begin(), images.end(), rel)) continue;
      fs::create_directories((out_images / rel).parent_path());
      fs::copy_file(ds.images_dir / rel, out_images / rel);
    }

    std::vector<ImageLogEntry> entries(images.size());
    std::vector<std::string> warn(images.size());
    parallel_for(images.size(), options.jobs, [&](std::size_t i) {
      const std::string rel = images[i].generic_string();
      const auto src = read_bytes(ds.images_dir / images[i]);
      ImageLogEntry& e = entries[i];
      e.path = rel;
      e.bytes_before = src.size();
      std::vector<std::uint8_t> result;
      try {
        auto img = decode_image(src);
        if (!img) throw Error(Errc::kIo, "undecodable image");
        TransformOutput out = kind.apply(*img, spec.params, TransformContext{seed, rel});
        if (out.encoded) {
          result = std::move(*out.encoded);
          e.status = "transformed";
        } else if (out.image == *img) {
          result = src;
          e.status = "identity";
        } else {
          result = encode_like_source(out.image, sniff_format(src));
          e.status = "transformed";
        }
      } catch (const Error& err) {
        // Keep the dataset aligned with its annotations.
        result = src;
        e.status = std::string("copied: ") + err.what();
        warn[i] = rel + ": " + err.what();
      }
      e.bytes_after = result.size();
      fs::create_directories((out_images / images[i]).parent_path());
      write_bytes(out_images / images[i], result);
    });

    ModifierOutcome outcome;
    outcome.images_processed = images.size();
    outcome.per_image_log = std::move(entries);
    for (const auto& e : outcome.per_image_log) {
      outcome.bytes_before += e.bytes_before;
      outcome.bytes_after += e.bytes_after;
    }
    for (auto& w : warn) {
      if (w.empty()) continue;
      log().warn("{}: {}", spec.name, w);
      outcome.warnings.push_back(std::move(w));
    }

    if (fs::exists(dest)) fs::remove_all(dest);
    fs::rename(staging, dest);
    outcome.new_handle = discover(dest);
    for (const auto& [k, v] : ds.params) outcome.new_handle.params.try_emplace(k, v);
    outcome.new_handle.params["source_ds_name"] = ds.name();
    outcome.new_handle.params["modifier"] = spec.name;
    outcome.new_handle.params["modifier_kind"] = spec.kind;
    for (const auto& [k, v] : spec.params.items()) outcome.new_handle.params["modifier." + k] = format_scalar(v);
    write_file_atomic(dest / kModifierLogFile, to_json(outcome, spec, seed).dump(2));
    return outcome;
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
}

}  // namespace iqh
