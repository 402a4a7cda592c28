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

#include <stdexcept>
#include <string>
#include <string_view>

namespace iqh {

// Every failure raised by the library carries one of these codes. The CLI maps
// them onto exit codes (validation vs runtime), tests assert on them.
enum class Errc {
  kIo,
  kParse,
  kSchema,
  kValidation,
  kNoImagesDir,
  kAmbiguousAnnotations,
  kInvalidModifierName,
  kEmptyResult,
  kNoImages,
  kDegenerateGeometry,
  kUnknownField,
  kNonNumericField,
  kDestinationExists,
  kUnsupportedChannelCount,
  kShapeMismatch,
  kTooSmall,
  kNoEdgesFound,
  kMissingReference,
  kEmptyDataset,
  kEmptyGroundTruth,
  kEmptyGrid,
  kNonZeroExit,
  kTimeout,
  kMalformedResults,
  kStore,
  kDuplicateRunId,
  kUnknownExperiment,
  kMetric,
  kNonNumericY,
  kDuplicateKind,
  kUnknownKind,
};

std::string_view to_string(Errc code) noexcept;

// True for codes caused by bad user input rather than the environment.
bool is_validation_error(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Parse failures also report where in the input they happened.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t byte_offset)
      : Error(Errc::kParse, message + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

}  // namespace iqh
