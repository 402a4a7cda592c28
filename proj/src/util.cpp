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

#include "iqh/util.hpp"

#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "iqh/error.hpp"

namespace iqh {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::kIo: return "IoError";
    case Errc::kParse: return "ParseError";
    case Errc::kSchema: return "SchemaError";
    case Errc::kValidation: return "ValidationError";
    case Errc::kNoImagesDir: return "NoImagesDir";
    case Errc::kAmbiguousAnnotations: return "AmbiguousAnnotations";
    case Errc::kInvalidModifierName: return "InvalidModifierName";
    case Errc::kEmptyResult: return "EmptyResult";
    case Errc::kNoImages: return "NoImages";
    case Errc::kDegenerateGeometry: return "DegenerateGeometry";
    case Errc::kUnknownField: return "UnknownField";
    case Errc::kNonNumericField: return "NonNumericField";
    case Errc::kDestinationExists: return "DestinationExists";
    case Errc::kUnsupportedChannelCount: return "UnsupportedChannelCount";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kTooSmall: return "TooSmall";
    case Errc::kNoEdgesFound: return "NoEdgesFound";
    case Errc::kMissingReference: return "MissingReference";
    case Errc::kEmptyDataset: return "EmptyDataset";
    case Errc::kEmptyGroundTruth: return "EmptyGroundTruth";
    case Errc::kEmptyGrid: return "EmptyGrid";
    case Errc::kNonZeroExit: return "NonZeroExit";
    case Errc::kTimeout: return "Timeout";
    case Errc::kMalformedResults: return "MalformedResults";
    case Errc::kStore: return "StoreError";
    case Errc::kDuplicateRunId: return "DuplicateRunId";
    case Errc::kUnknownExperiment: return "UnknownExperiment";
    case Errc::kMetric: return "MetricError";
    case Errc::kNonNumericY: return "NonNumericY";
    case Errc::kDuplicateKind: return "DuplicateKind";
    case Errc::kUnknownKind: return "UnknownKind";
  }
  return "Error";
}

bool is_validation_error(Errc code) noexcept {
  switch (code) {
    case Errc::kIo:
    case Errc::kStore:
    case Errc::kNonZeroExit:
    case Errc::kTimeout:
    case Errc::kMetric:
    case Errc::kEmptyResult:
      return false;
    default:
      return true;
  }
}

spdlog::logger& log() {
  static std::shared_ptr<spdlog::logger> logger = [] {
    auto l = spdlog::stderr_color_mt("iqh");
    l->set_pattern("[%l] %v");
    return l;
  }();
  return *logger;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::string s = read_file(path);
  return {s.begin(), s.end()};
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." +
         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIo, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(Errc::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(Errc::kIo, "cannot rename onto " + path.string());
  }
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::kIo, "short write to " + path.string());
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }
}

json load_json(const fs::path& path) {
  std::string text = read_file(path);
  try {
    return parse_json(text);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte_offset());
  }
}

namespace {

std::string to_hex(const unsigned char* data, unsigned int len) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kDigits[data[i] >> 4]);
    out.push_back(kDigits[data[i] & 0xF]);
  }
  return out;
}

struct DigestCtx {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  DigestCtx() { EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr); }
  ~DigestCtx() { EVP_MD_CTX_free(ctx); }
  DigestCtx(const DigestCtx&) = delete;
  DigestCtx& operator=(const DigestCtx&) = delete;
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx, data, n); }
  std::vector<unsigned char> finish() {
    std::vector<unsigned char> md(EVP_MAX_MD_SIZE);
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md.data(), &len);
    md.resize(len);
    return md;
  }
};

}  // namespace

std::string sha256_hex(std::string_view data) {
  DigestCtx d;
  d.update(data.data(), data.size());
  auto md = d.finish();
  return to_hex(md.data(), static_cast<unsigned int>(md.size()));
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  DigestCtx d;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  auto md = d.finish();
  return to_hex(md.data(), static_cast<unsigned int>(md.size()));
}

std::uint64_t stable_hash64(std::string_view data) {
  DigestCtx d;
  d.update(data.data(), data.size());
  auto md = d.finish();
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | md[static_cast<std::size_t>(i)];
  return v;
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) return std::to_string(value);
  return std::string(buf, end);
}

std::string format_scalar(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_float()) return format_double(value.get<double>());
  if (value.is_number_unsigned()) return std::to_string(value.get<std::uint64_t>());
  if (value.is_number_integer()) return std::to_string(value.get<std::int64_t>());
  if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
  if (value.is_null()) return "";
  return value.dump();
}

json number_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from_json(const json& j) {
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw Error(Errc::kSchema, "not a number: " + s);
  }
  if (!j.is_number()) throw Error(Errc::kSchema, "not a number: " + j.dump());
  return j.get<double>();
}

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  if (!ext.empty() && ext[0] == '.') ext.erase(0, 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& body) {
  if (count == 0) return;
  jobs = std::clamp<std::size_t>(jobs, 1, count);
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> workers;
    workers.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

std::string utc_timestamp() {
  using namespace std::chrono;
  auto now = system_clock::now();
  auto secs = time_point_cast<seconds>(now);
  auto ms = duration_cast<milliseconds>(now - secs).count();
  std::time_t t = system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof(out), "%s.%03lldZ", buf, static_cast<long long>(ms));
  return out;
}

}  // namespace iqh
