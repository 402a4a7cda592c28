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

#include "iqh/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>

#include <jpeglib.h>
#include <opencv2/core.hpp>
#include <opencv2/core/utils/logger.hpp>
#include <opencv2/imgcodecs.hpp>

#include "iqh/error.hpp"
#include "iqh/util.hpp"

namespace iqh {

Image::Image(int width, int height, int channels, int bit_depth, std::uint16_t fill)
    : width_(width), height_(height), channels_(channels), bit_depth_(bit_depth) {
  if (width <= 0 || height <= 0) throw Error(Errc::kValidation, "image dimensions must be positive");
  if (channels != 1 && channels != 3 && channels != 4) {
    throw Error(Errc::kUnsupportedChannelCount, std::to_string(channels) + " channels");
  }
  if (bit_depth != 8 && bit_depth != 16) throw Error(Errc::kValidation, "bit depth must be 8 or 16");
  data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                   static_cast<std::size_t>(channels),
               fill);
}

Plane to_luma(const Image& img) {
  Plane p(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (img.channels() >= 3) {
        p(x, y) = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      } else {
        p(x, y) = img.at(x, y, 0);
      }
    }
  }
  return p;
}

Plane channel_plane(const Image& img, int channel) {
  Plane p(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) p(x, y) = img.at(x, y, channel);
  return p;
}

ImageFormat sniff_format(std::span<const std::uint8_t> b) noexcept {
  static constexpr std::uint8_t kPng[] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (b.size() >= 8 && std::memcmp(b.data(), kPng, 8) == 0) return ImageFormat::kPng;
  if (b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF) return ImageFormat::kJpeg;
  if (b.size() >= 4 && ((b[0] == 'I' && b[1] == 'I' && b[2] == 42 && b[3] == 0) ||
                        (b[0] == 'M' && b[1] == 'M' && b[2] == 0 && b[3] == 42))) {
    return ImageFormat::kTiff;
  }
  return ImageFormat::kUnknown;
}

bool has_complete_trailer(ImageFormat format, std::span<const std::uint8_t> b) noexcept {
  switch (format) {
    case ImageFormat::kPng: {
      // IEND chunk: length(4) "IEND" crc(4)
      if (b.size() < 12) return false;
      return std::memcmp(b.data() + b.size() - 8, "IEND", 4) == 0;
    }
    case ImageFormat::kJpeg: {
      // Some writers pad after EOI; scan the tail.
      std::size_t start = b.size() > 64 ? b.size() - 64 : 0;
      for (std::size_t i = b.size(); i-- > start + 1;) {
        if (b[i - 1] == 0xFF && b[i] == 0xD9) return true;
      }
      return false;
    }
    case ImageFormat::kTiff:
      return true;
    case ImageFormat::kUnknown:
      return false;
  }
  return false;
}

namespace {

void silence_opencv() {
  static const bool once = [] {
    cv::utils::logging::setLogLevel(cv::utils::logging::LOG_LEVEL_SILENT);
    return true;
  }();
  (void)once;
}

Image from_mat(const cv::Mat& mat) {
  const int depth = mat.depth() == CV_16U ? 16 : 8;
  const int channels = mat.channels();
  Image img(mat.cols, mat.rows, channels, depth);
  for (int y = 0; y < mat.rows; ++y) {
    for (int x = 0; x < mat.cols; ++x) {
      for (int c = 0; c < channels; ++c) {
        // OpenCV stores BGR(A); keep RGB(A) in memory.
        int src_c = (channels >= 3 && c < 3) ? 2 - c : c;
        std::uint16_t v = depth == 16
                              ? mat.ptr<std::uint16_t>(y)[x * channels + src_c]
                              : mat.ptr<std::uint8_t>(y)[x * channels + src_c];
        img.at(x, y, c) = v;
      }
    }
  }
  return img;
}

cv::Mat to_mat(const Image& img) {
  const int type = CV_MAKETYPE(img.bit_depth() == 16 ? CV_16U : CV_8U, img.channels());
  cv::Mat mat(img.height(), img.width(), type);
  const int channels = img.channels();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < channels; ++c) {
        int dst_c = (channels >= 3 && c < 3) ? 2 - c : c;
        if (img.bit_depth() == 16) {
          mat.ptr<std::uint16_t>(y)[x * channels + dst_c] = img.at(x, y, c);
        } else {
          mat.ptr<std::uint8_t>(y)[x * channels + dst_c] = static_cast<std::uint8_t>(img.at(x, y, c));
        }
      }
    }
  }
  return mat;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

}  // namespace

std::optional<Image> decode_image(std::span<const std::uint8_t> bytes) {
  silence_opencv();
  if (sniff_format(bytes) == ImageFormat::kUnknown) return std::nullopt;
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8U, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat mat;
  try {
    mat = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception&) {
    return std::nullopt;
  }
  if (mat.empty()) return std::nullopt;
  if (mat.depth() != CV_8U && mat.depth() != CV_16U) return std::nullopt;
  if (mat.channels() != 1 && mat.channels() != 3 && mat.channels() != 4) return std::nullopt;
  return from_mat(mat);
}

Image read_image(const std::filesystem::path& path) {
  auto bytes = read_bytes(path);
  auto img = decode_image(bytes);
  if (!img) throw Error(Errc::kIo, "cannot decode image " + path.string());
  return *std::move(img);
}

std::vector<std::uint8_t> encode_lossless(const Image& img, ImageFormat format) {
  silence_opencv();
  const char* ext = nullptr;
  switch (format) {
    case ImageFormat::kPng: ext = ".png"; break;
    case ImageFormat::kTiff: ext = ".tiff"; break;
    default: throw Error(Errc::kValidation, "lossless encoding supports PNG and TIFF only");
  }
  std::vector<std::uint8_t> out;
  std::vector<int> params;
  if (format == ImageFormat::kPng) params = {cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imencode(ext, to_mat(img), out, params)) throw Error(Errc::kIo, "PNG/TIFF encoding failed");
  return out;
}

std::vector<std::uint8_t> encode_jpeg(const Image& src, const JpegOptions& options) {
  if (src.channels() != 1 && src.channels() != 3) {
    throw Error(Errc::kUnsupportedChannelCount,
                "JPEG needs 1 or 3 channels, got " + std::to_string(src.channels()));
  }
  const Image img = to_8bit(src);
  const int channels = img.channels();

  jpeg_compress_struct cinfo{};
  JpegErrorManager jerr{};
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = jpeg_error_exit;

  unsigned char* mem = nullptr;
  unsigned long mem_size = 0;
  std::vector<std::uint8_t> row_storage(static_cast<std::size_t>(img.width()) *
                                        static_cast<std::size_t>(channels));
  if (setjmp(jerr.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::free(mem);
    throw Error(Errc::kIo, std::string("JPEG encoding failed: ") + jerr.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &mem, &mem_size);
  cinfo.image_width = static_cast<JDIMENSION>(img.width());
  cinfo.image_height = static_cast<JDIMENSION>(img.height());
  cinfo.input_components = channels;
  cinfo.in_color_space = channels == 3 ? JCS_RGB : JCS_GRAYSCALE;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, options.quality, TRUE);
  if (channels == 3) {
    const int h = options.subsample_chroma ? 2 : 1;
    cinfo.comp_info[0].h_samp_factor = h;
    cinfo.comp_info[0].v_samp_factor = h;
    cinfo.comp_info[1].h_samp_factor = 1;
    cinfo.comp_info[1].v_samp_factor = 1;
    cinfo.comp_info[2].h_samp_factor = 1;
    cinfo.comp_info[2].v_samp_factor = 1;
  }
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    const int y = static_cast<int>(cinfo.next_scanline);
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < channels; ++c)
        row_storage[static_cast<std::size_t>(x * channels + c)] =
            static_cast<std::uint8_t>(img.at(x, y, c));
    JSAMPROW row = row_storage.data();
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::vector<std::uint8_t> out(mem, mem + mem_size);
  std::free(mem);
  return out;
}

void write_image(const std::filesystem::path& path, const Image& img) {
  const std::string ext = lower_extension(path);
  std::vector<std::uint8_t> bytes;
  if (ext == "png") {
    bytes = encode_lossless(img, ImageFormat::kPng);
  } else if (ext == "tif" || ext == "tiff") {
    bytes = encode_lossless(img, ImageFormat::kTiff);
  } else if (ext == "jpg" || ext == "jpeg") {
    bytes = encode_jpeg(img, {95, false});
  } else {
    throw Error(Errc::kValidation, "unsupported image extension: " + path.string());
  }
  write_bytes(path, bytes);
}

Image to_8bit(const Image& img) {
  if (img.bit_depth() == 8) return img;
  Image out(img.width(), img.height(), img.channels(), 8);
  auto src = img.samples();
  auto dst = out.samples();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = static_cast<std::uint16_t>((static_cast<std::uint32_t>(src[i]) * 255u + 32767u) / 65535u);
  }
  return out;
}

bool is_image_extension(const std::string& e) noexcept {
  return e == "png" || e == "jpg" || e == "jpeg" || e == "tif" || e == "tiff";
}

namespace {

struct Tap {
  int src;
  double weight;
};

// Overlap weights of each destination cell with the source cells it covers.
std::vector<std::vector<Tap>> box_taps(int src, int dst) {
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    const double a = i * scale, b = (i + 1) * scale;
    const int first = static_cast<int>(std::floor(a));
    const int last = std::min(src - 1, static_cast<int>(std::ceil(b)) - 1);
    for (int s = first; s <= last; ++s) {
      const double w = std::min<double>(b, s + 1) - std::max<double>(a, s);
      if (w > 0.0) taps[static_cast<std::size_t>(i)].push_back({s, w / scale});
    }
  }
  return taps;
}

}  // namespace

std::vector<double> box_resample(const Image& img, int dst_w, int dst_h) {
  if (dst_w <= 0 || dst_h <= 0) throw Error(Errc::kValidation, "resample target must be positive");
  const int c = img.channels();
  const auto tx = box_taps(img.width(), dst_w);
  const auto ty = box_taps(img.height(), dst_h);
  // Horizontal pass into a dst_w x src_h buffer, then vertical.
  std::vector<double> mid(static_cast<std::size_t>(dst_w) * img.height() * c, 0.0);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < dst_w; ++x)
      for (const Tap& t : tx[static_cast<std::size_t>(x)])
        for (int k = 0; k < c; ++k)
          mid[(static_cast<std::size_t>(y) * dst_w + x) * c + k] += t.weight * img.at(t.src, y, k);
  std::vector<double> out(static_cast<std::size_t>(dst_w) * dst_h * c, 0.0);
  for (int y = 0; y < dst_h; ++y)
    for (const Tap& t : ty[static_cast<std::size_t>(y)])
      for (int x = 0; x < dst_w; ++x)
        for (int k = 0; k < c; ++k)
          out[(static_cast<std::size_t>(y) * dst_w + x) * c + k] +=
              t.weight * mid[(static_cast<std::size_t>(t.src) * dst_w + x) * c + k];
  return out;
}

Image resize_box(const Image& img, int dst_w, int dst_h) {
  const auto v = box_resample(img, dst_w, dst_h);
  Image out(dst_w, dst_h, img.channels(), img.bit_depth());
  auto s = out.samples();
  for (std::size_t i = 0; i < v.size(); ++i)
    s[i] = static_cast<std::uint16_t>(std::clamp(std::round(v[i]), 0.0, img.max_value()));
  return out;
}

}  // namespace iqh
