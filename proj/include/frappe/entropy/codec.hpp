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

// Plane codecs behind a four-function interface, and the mapping between a
// scale group's latent grid and an 8-bit plane.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "frappe/analysis.hpp"
#include "frappe/entropy/jpegls.hpp"
#include "frappe/error.hpp"

namespace frappe::entropy {

inline constexpr int kLatentOffset = 128;

enum class CodecId : std::uint8_t { kStored = 0, kJpegLs = 1 };

class PlaneCodec {
 public:
  virtual ~PlaneCodec() = default;
  virtual std::vector<std::uint8_t> plane_encode(const Plane& plane) const = 0;
  virtual Plane plane_decode(std::span<const std::uint8_t> bytes) const = 0;
  virtual std::string probe_name() const = 0;
  // Upper bound on the encoded size of a width x height plane.
  virtual std::size_t max_expansion(std::size_t width, std::size_t height) const = 0;
  virtual CodecId id() const = 0;
};

// Raw samples after a u32 width and u32 height, big-endian.
class StoredCodec final : public PlaneCodec {
 public:
  std::vector<std::uint8_t> plane_encode(const Plane& plane) const override {
    if (plane.samples.size() != plane.width * plane.height) throw DimensionError("plane sample count mismatch");
    std::vector<std::uint8_t> out;
    out.reserve(8 + plane.samples.size());
    for (std::uint32_t v : {std::uint32_t(plane.width), std::uint32_t(plane.height)}) {
      for (int b = 3; b >= 0; --b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
    }
    out.insert(out.end(), plane.samples.begin(), plane.samples.end());
    return out;
  }

  Plane plane_decode(std::span<const std::uint8_t> bytes) const override {
    if (bytes.size() < 8) throw FormatError(FormatErrc::kTruncated, "stored plane header truncated", bytes.size());
    auto u32 = [&](std::size_t at) {
      return (std::size_t(bytes[at]) << 24) | (std::size_t(bytes[at + 1]) << 16) | (std::size_t(bytes[at + 2]) << 8) |
             std::size_t(bytes[at + 3]);
    };
    const std::size_t w = u32(0), h = u32(4);
    if (w == 0 || h == 0) throw FormatError(FormatErrc::kCorruptPayload, "stored plane has zero extent", 0);
    if (bytes.size() - 8 != w * h) {
      throw FormatError(FormatErrc::kLengthMismatch,
                        "stored plane " + std::to_string(w) + "x" + std::to_string(h) + " carries " +
                            std::to_string(bytes.size() - 8) + " samples",
                        8);
    }
    return Plane(w, h, std::vector<std::uint8_t>(bytes.begin() + 8, bytes.end()));
  }

  std::string probe_name() const override { return "stored"; }
  std::size_t max_expansion(std::size_t width, std::size_t height) const override { return 8 + width * height; }
  CodecId id() const override { return CodecId::kStored; }
};

class JpegLsCodec final : public PlaneCodec {
 public:
  std::vector<std::uint8_t> plane_encode(const Plane& plane) const override { return jpegls::encode(plane); }
  Plane plane_decode(std::span<const std::uint8_t> bytes) const override { return jpegls::decode(bytes); }
  std::string probe_name() const override { return "jpeg-ls"; }

  // Every sample costs at most LIMIT = 32 bits; stuffing adds at most one
  // bit in eight; 25 bytes of markers and headers plus a stuffed tail byte.
  std::size_t max_expansion(std::size_t width, std::size_t height) const override {
    const std::size_t bits = width * height * 32;
    return 32 + (bits + bits / 7 + 7) / 8;
  }
  CodecId id() const override { return CodecId::kJpegLs; }
};

inline const PlaneCodec& codec_for(CodecId id) {
  static const StoredCodec stored;
  static const JpegLsCodec jpegls;
  switch (id) {
    case CodecId::kStored:
      return stored;
    case CodecId::kJpegLs:
      return jpegls;
  }
  throw FormatError(FormatErrc::kUnknownCodec, "unknown entropy codec id " + std::to_string(int(id)), 0);
}

inline const PlaneCodec& codec_for(std::uint8_t raw) {
  if (raw > 1) throw FormatError(FormatErrc::kUnknownCodec, "unknown entropy codec id " + std::to_string(raw), 5);
  return codec_for(static_cast<CodecId>(raw));
}

inline CodecId codec_by_name(const std::string& name) {
  if (name == "jpeg-ls" || name == "jpegls") return CodecId::kJpegLs;
  if (name == "stored") return CodecId::kStored;
  throw ParameterError("unknown entropy codec '" + name + "' (expected jpeg-ls or stored)");
}

// Plane dimensions for a grid of k channels: channels and all but the last
// axis stacked vertically, the last axis horizontal.
inline std::pair<std::size_t, std::size_t> plane_dims(std::size_t channels, const Shape& grid) {
  if (grid.empty()) throw DimensionError("latent grid has no spatial axes");
  std::size_t h = channels;
  for (std::size_t d = 0; d + 1 < grid.size(); ++d) h *= grid[d];
  return {grid.back(), h};
}

inline Plane reshape_scale(const ScaleLatents& latents) {
  if (latents.channels == 0) throw DimensionError("cannot reshape an empty scale group");
  const auto [w, h] = plane_dims(latents.channels, latents.grid);
  if (latents.values.size() != w * h) {
    throw DimensionError("latent grid holds " + std::to_string(latents.values.size()) + " values, expected " +
                         std::to_string(w * h));
  }
  Plane p(w, h);
  for (std::size_t i = 0; i < latents.values.size(); ++i) {
    p.samples[i] = static_cast<std::uint8_t>(int(latents.values[i]) + kLatentOffset);
  }
  return p;
}

inline ScaleLatents unshape_scale(const Plane& plane, std::size_t channels, const Shape& grid) {
  const auto [w, h] = plane_dims(channels, grid);
  if (plane.width != w || plane.height != h) {
    throw FormatError(FormatErrc::kInconsistent,
                      "plane is " + std::to_string(plane.width) + "x" + std::to_string(plane.height) +
                          ", header implies " + std::to_string(w) + "x" + std::to_string(h),
                      0);
  }
  ScaleLatents out;
  out.channels = channels;
  out.grid = grid;
  out.values.resize(plane.samples.size());
  for (std::size_t i = 0; i < plane.samples.size(); ++i) {
    const int v = int(plane.samples[i]) - kLatentOffset;
    if (v < -kLatentMax || v > kLatentMax) {
      throw FormatError(FormatErrc::kCorruptPayload, "latent sample 0 outside the signed 8-bit range", i);
    }
    out.values[i] = static_cast<std::int8_t>(v);
  }
  return out;
}

}  // namespace frappe::entropy
