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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace iqh {

enum class ImageFormat { kPng, kJpeg, kTiff, kUnknown };

// Interleaved raster with 8- or 16-bit samples and 1, 3 or 4 channels (RGB
// order). Samples are stored widened to uint16 regardless of depth.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, int bit_depth = 8, std::uint16_t fill = 0);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  int bit_depth() const noexcept { return bit_depth_; }
  bool empty() const noexcept { return data_.empty(); }
  double max_value() const noexcept { return bit_depth_ == 16 ? 65535.0 : 255.0; }

  std::uint16_t at(int x, int y, int c = 0) const noexcept {
    return data_[index(x, y, c)];
  }
  std::uint16_t& at(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }

  std::span<const std::uint16_t> samples() const noexcept { return data_; }
  std::span<std::uint16_t> samples() noexcept { return data_; }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_ && bit_depth_ == other.bit_depth_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  int bit_depth_ = 8;
  std::vector<std::uint16_t> data_;
};

// Single-channel floating-point raster used by the metric code.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  Plane() = default;
  Plane(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  double& operator()(int x, int y) noexcept {
    return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
  }
  double operator()(int x, int y) const noexcept {
    return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
  }
};

/// Luma (0.299 R + 0.587 G + 0.114 B) for colour images, the channel itself
/// for grayscale. Alpha is ignored.
Plane to_luma(const Image& img);

/// Extracts one channel as a plane.
Plane channel_plane(const Image& img, int channel);

/// Format from leading magic bytes.
ImageFormat sniff_format(std::span<const std::uint8_t> bytes) noexcept;

/// True when the byte stream ends with the format's end marker (PNG IEND
/// chunk, JPEG EOI). Always true for TIFF, which has no trailer.
bool has_complete_trailer(ImageFormat format, std::span<const std::uint8_t> bytes) noexcept;

/// Decodes PNG/JPEG/TIFF bytes. Returns nullopt when the codec rejects them.
std::optional<Image> decode_image(std::span<const std::uint8_t> bytes);

/// Reads and decodes a file; throws Error(kIo) when unreadable or undecodable.
Image read_image(const std::filesystem::path& path);

/// Lossless encoding (PNG or TIFF).
std::vector<std::uint8_t> encode_lossless(const Image& img, ImageFormat format);

struct JpegOptions {
  int quality = 95;
  // Chroma subsampling 4:2:0 when true, 4:4:4 otherwise.
  bool subsample_chroma = false;
};

/// Baseline JPEG encoding of an 8-bit, 1- or 3-channel image.
std::vector<std::uint8_t> encode_jpeg(const Image& img, const JpegOptions& options);

/// Encodes according to the file extension (png, jpg/jpeg, tif/tiff).
void write_image(const std::filesystem::path& path, const Image& img);

/// Rescales a 16-bit image to 8 bits (identity for 8-bit input).
Image to_8bit(const Image& img);

bool is_image_extension(const std::string& lower_ext) noexcept;

/// Area-weighted (box filter) resampling to dst_w x dst_h. Returns interleaved
/// samples in double precision, same channel count as `img`.
std::vector<double> box_resample(const Image& img, int dst_w, int dst_h);

/// box_resample rounded back to the source depth.
Image resize_box(const Image& img, int dst_w, int dst_h);

}  // namespace iqh
