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
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include <spdlog/logger.h>

namespace iqh {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

/// Shared logger for the library; warnings go to stderr.
spdlog::logger& log();

std::string read_file(const fs::path& path);
std::vector<std::uint8_t> read_bytes(const fs::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// see either the old or the new content.
void write_file_atomic(const fs::path& path, std::string_view content);

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes);

/// Parses JSON text, mapping parser failures to ParseError with a byte offset.
json parse_json(std::string_view text);
json load_json(const fs::path& path);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const fs::path& path);

/// First 8 bytes of SHA-256 of `data`, little-endian.
std::uint64_t stable_hash64(std::string_view data);

/// Shortest decimal form that round-trips to the same double ("1e-06", "0.83").
std::string format_double(double value);

/// Formats a scalar JSON value the way it appears on a command line or in a
/// table cell: integers verbatim, floats shortest round-trip, strings verbatim.
std::string format_scalar(const json& value);

/// JSON has no inf/nan; they travel as the strings "inf", "-inf", "nan".
json number_to_json(double value);
/// Inverse of number_to_json; throws Error(kSchema) for anything else.
double number_from_json(const json& value);

/// Lowercased extension without the dot.
std::string lower_extension(const fs::path& path);

/// Runs `body(i)` for i in [0, count) on up to `jobs` threads. Exceptions from
/// workers are rethrown on the caller after all workers join.
void parallel_for(std::size_t count, std::size_t jobs,
                  const std::function<void(std::size_t)>& body);

/// UTC timestamp in ISO-8601 with millisecond precision.
std::string utc_timestamp();

}  // namespace iqh
