// Copyright 2026 The FRAPPE Authors. All Rights Reserved.
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

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace frappe {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents that do not fit an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Out-of-domain scalar parameter (non-positive sigma, bad channel count...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Reverse-mode tape misuse (foreign nodes, non-scalar loss, ordering).
class InternalError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrc : std::uint8_t {
  kBadMagic = 1,
  kBadVersion,
  kTruncated,
  kLengthMismatch,
  kCorruptPayload,
  kUnknownCodec,
  kChecksum,
  kInconsistent,
  kIo,
};

inline const char* to_string(FormatErrc code) {
  switch (code) {
    case FormatErrc::kBadMagic: return "bad magic";
    case FormatErrc::kBadVersion: return "unsupported version";
    case FormatErrc::kTruncated: return "truncated data";
    case FormatErrc::kLengthMismatch: return "length mismatch";
    case FormatErrc::kCorruptPayload: return "corrupt payload";
    case FormatErrc::kUnknownCodec: return "unknown entropy codec";
    case FormatErrc::kChecksum: return "checksum mismatch";
    case FormatErrc::kInconsistent: return "inconsistent contents";
    case FormatErrc::kIo: return "i/o failure";
  }
  return "format error";
}

// Malformed bytes: streams, codestreams, model files, images.
class FormatError : public Error {
 public:
  FormatError(FormatErrc code, const std::string& what, std::size_t offset = 0)
      : Error(std::string(to_string(code)) + ": " + what), code_(code), offset_(offset) {}

  FormatErrc code() const noexcept { return code_; }
  // Byte offset at which decoding failed, where meaningful.
  std::size_t offset() const noexcept { return offset_; }

 private:
  FormatErrc code_;
  std::size_t offset_;
};

// A decoder snapshot that does not match the transmitted channel count.
class SnapshotError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during training.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& stage, std::size_t step)
      : Error("non-finite loss in " + stage + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace frappe
