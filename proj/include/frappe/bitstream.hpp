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

// Stream layout, all integers big-endian:
//
//   "FRP1" | version u8 | codec u8
//   C u8 | D u8 | p_d u16 | S u8 | S x (n_s u8, p_s u16)
//   n u8 | D x T_d u32
//   per populated scale group, coarse first: length u32 | payload

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "frappe/analysis.hpp"
#include "frappe/config.hpp"
#include "frappe/entropy/codec.hpp"
#include "frappe/error.hpp"

namespace frappe {

inline constexpr char kStreamMagic[4] = {'F', 'R', 'P', '1'};
inline constexpr std::uint8_t kStreamVersion = 1;

namespace detail {

class ByteSink {
 public:
  void u8(std::size_t v) { out.push_back(static_cast<std::uint8_t>(v)); }
  void u16(std::size_t v) {
    u8(v >> 8);
    u8(v & 0xFF);
  }
  void u32(std::size_t v) {
    for (int b = 3; b >= 0; --b) u8((v >> (8 * b)) & 0xFF);
  }
  void bytes(std::span<const std::uint8_t> b) { out.insert(out.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t> out;
};

class ByteSource {
 public:
  explicit ByteSource(std::span<const std::uint8_t> d) : data(d) {}
  void need(std::size_t n, const char* what) const {
    if (pos + n > data.size()) {
      throw FormatError(FormatErrc::kTruncated, std::string("stream truncated in ") + what, data.size());
    }
  }
  std::size_t u8(const char* what) {
    need(1, what);
    return data[pos++];
  }
  std::size_t u16(const char* what) {
    need(2, what);
    const std::size_t v = (std::size_t(data[pos]) << 8) | data[pos + 1];
    pos += 2;
    return v;
  }
  std::size_t u32(const char* what) {
    need(4, what);
    std::size_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | data[pos + i];
    pos += 4;
    return v;
  }
  std::span<const std::uint8_t> data;
  std::size_t pos = 0;
};

}  // namespace detail

struct StreamHeader {
  entropy::CodecId codec = entropy::CodecId::kJpegLs;
  CodecConfig config;
  std::size_t transmitted = 0;
  Shape extents;
  std::size_t size = 0;  // bytes up to the first payload
};

struct StreamSegment {
  std::size_t scale;
  std::size_t offset;  // of the payload, after its length prefix
  std::size_t length;
};

struct ParsedStream {
  StreamHeader header;
  std::vector<StreamSegment> segments;
};

inline void write_header(detail::ByteSink& sink, entropy::CodecId codec, const CodecConfig& config,
                         std::size_t n, const Shape& extents) {
  for (char c : kStreamMagic) sink.u8(static_cast<std::uint8_t>(c));
  sink.u8(kStreamVersion);
  sink.u8(static_cast<std::uint8_t>(codec));
  sink.u8(config.input_channels);
  sink.u8(config.rank);
  sink.u16(config.decoder_patch);
  sink.u8(config.scales.size());
  for (const auto& s : config.scales) {
    sink.u8(s.channels);
    sink.u16(s.patch);
  }
  sink.u8(n);
  for (std::size_t e : extents) {
    if (e > 0xFFFFFFFFull) throw DimensionError("extent " + std::to_string(e) + " exceeds 32 bits");
    sink.u32(e);
  }
}

// Header and segment table; validates structure but not payload contents.
inline ParsedStream parse_stream(std::span<const std::uint8_t> bytes) {
  detail::ByteSource src(bytes);
  src.need(4, "magic");
  for (int i = 0; i < 4; ++i) {
    if (bytes[i] != static_cast<std::uint8_t>(kStreamMagic[i])) {
      throw FormatError(FormatErrc::kBadMagic, "not a FRAPPE stream (bad magic)", i);
    }
  }
  src.pos = 4;
  const std::size_t version = src.u8("version");
  if (version != kStreamVersion) {
    throw FormatError(FormatErrc::kBadVersion, "unsupported stream version " + std::to_string(version), 4);
  }
  ParsedStream ps;
  const std::size_t codec_at = src.pos;
  const std::size_t codec = src.u8("codec id");
  if (codec > 1) {
    throw FormatError(FormatErrc::kUnknownCodec, "unknown entropy codec id " + std::to_string(codec), codec_at);
  }
  ps.header.codec = static_cast<entropy::CodecId>(codec);
  CodecConfig& cfg = ps.header.config;
  cfg.input_channels = src.u8("config");
  cfg.rank = src.u8("config");
  cfg.decoder_patch = src.u16("config");
  const std::size_t S = src.u8("config");
  cfg.scales.resize(S);
  for (auto& s : cfg.scales) {
    s.channels = src.u8("scale table");
    s.patch = src.u16("scale table");
  }
  try {
    cfg.validate();
  } catch (const ParameterError& e) {
    throw FormatError(FormatErrc::kInconsistent, e.what(), src.pos);
  }
  const std::size_t n_at = src.pos;
  ps.header.transmitted = src.u8("channel count");
  if (ps.header.transmitted < 1 || ps.header.transmitted > cfg.total_channels()) {
    throw FormatError(FormatErrc::kInconsistent,
                      "channel count " + std::to_string(ps.header.transmitted) + " outside [1, " +
                          std::to_string(cfg.total_channels()) + "]",
                      n_at);
  }
  for (std::size_t d = 0; d < cfg.rank; ++d) ps.header.extents.push_back(src.u32("extents"));
  try {
    cfg.check_extents(ps.header.extents);
  } catch (const DimensionError& e) {
    throw FormatError(FormatErrc::kInconsistent, e.what(), src.pos);
  }
  ps.header.size = src.pos;
  const auto k = cfg.populated(ps.header.transmitted);
  for (std::size_t s = 0; s < S && k[s] > 0; ++s) {
    const std::size_t at = src.pos;
    const std::size_t len = src.u32("segment length");
    if (src.pos + len > bytes.size()) {
      throw FormatError(FormatErrc::kTruncated,
                        "segment " + std::to_string(s) + " declares " + std::to_string(len) + " bytes, " +
                            std::to_string(bytes.size() - src.pos) + " remain",
                        at);
    }
    ps.segments.push_back({s, src.pos, len});
    src.pos += len;
  }
  if (src.pos != bytes.size()) {
    throw FormatError(FormatErrc::kLengthMismatch,
                      "declared lengths cover " + std::to_string(src.pos) + " of " + std::to_string(bytes.size()) +
                          " bytes",
                      src.pos);
  }
  return ps;
}

inline std::vector<std::uint8_t> pack(const LatentSet& latents,
                                      entropy::CodecId codec = entropy::CodecId::kJpegLs) {
  const CodecConfig& cfg = latents.config;
  cfg.validate();
  cfg.check_extents(latents.extents);
  const auto k = cfg.populated(latents.transmitted);
  if (latents.scales.size() != cfg.scales.size()) throw DimensionError("latent set scale count mismatch");
  const auto& coder = entropy::codec_for(codec);
  detail::ByteSink sink;
  write_header(sink, codec, cfg, latents.transmitted, latents.extents);
  for (std::size_t s = 0; s < cfg.scales.size() && k[s] > 0; ++s) {
    if (latents.scales[s].channels != k[s]) {
      throw DimensionError("scale " + std::to_string(s) + " holds " + std::to_string(latents.scales[s].channels) +
                           " channels, n=" + std::to_string(latents.transmitted) + " implies " +
                           std::to_string(k[s]));
    }
    const auto payload = coder.plane_encode(entropy::reshape_scale(latents.scales[s]));
    sink.u32(payload.size());
    sink.bytes(payload);
  }
  return std::move(sink.out);
}

inline Shape scale_grid(const Shape& extents, std::size_t patch) {
  Shape g = extents;
  for (auto& e : g) e /= patch;
  return g;
}

inline LatentSet unpack(std::span<const std::uint8_t> bytes) {
  const ParsedStream ps = parse_stream(bytes);
  const CodecConfig& cfg = ps.header.config;
  const auto& coder = entropy::codec_for(ps.header.codec);
  const auto k = cfg.populated(ps.header.transmitted);
  LatentSet out;
  out.config = cfg;
  out.transmitted = ps.header.transmitted;
  out.extents = ps.header.extents;
  out.scales.resize(cfg.scales.size());
  for (std::size_t s = 0; s < cfg.scales.size(); ++s) {
    out.scales[s].channels = 0;
    out.scales[s].grid = scale_grid(out.extents, cfg.scales[s].patch);
  }
  for (const auto& seg : ps.segments) {
    entropy::Plane plane;
    try {
      plane = coder.plane_decode(bytes.subspan(seg.offset, seg.length));
    } catch (const FormatError& e) {
      throw FormatError(e.code(), "scale " + std::to_string(seg.scale) + ": " + e.what(), seg.offset + e.offset());
    }
    try {
      out.scales[seg.scale] = entropy::unshape_scale(plane, k[seg.scale], out.scales[seg.scale].grid);
    } catch (const FormatError& e) {
      throw FormatError(e.code(), "scale " + std::to_string(seg.scale) + ": " + e.what(), seg.offset);
    }
  }
  return out;
}

// Stream carrying only the first n channels; byte-identical to packing a
// fresh encode at n.
inline std::vector<std::uint8_t> truncate(std::span<const std::uint8_t> bytes, std::size_t n) {
  const ParsedStream ps = parse_stream(bytes);
  const CodecConfig& cfg = ps.header.config;
  if (n < 1 || n > ps.header.transmitted) {
    throw ParameterError("cannot truncate a " + std::to_string(ps.header.transmitted) + "-channel stream to " +
                         std::to_string(n) + " channels");
  }
  if (n == ps.header.transmitted) return {bytes.begin(), bytes.end()};
  const auto have = cfg.populated(ps.header.transmitted);
  const auto keep = cfg.populated(n);
  const auto& coder = entropy::codec_for(ps.header.codec);
  detail::ByteSink sink;
  write_header(sink, ps.header.codec, cfg, n, ps.header.extents);
  for (const auto& seg : ps.segments) {
    const std::size_t s = seg.scale;
    if (keep[s] == 0) break;
    const auto payload = bytes.subspan(seg.offset, seg.length);
    if (keep[s] == have[s]) {
      sink.u32(payload.size());
      sink.bytes(payload);
      continue;
    }
    const entropy::Plane plane = coder.plane_decode(payload);
    const Shape grid = scale_grid(ps.header.extents, cfg.scales[s].patch);
    ScaleLatents lat = entropy::unshape_scale(plane, have[s], grid);
    lat.channels = keep[s];
    lat.values.resize(keep[s] * lat.sites());
    const auto recoded = coder.plane_encode(entropy::reshape_scale(lat));
    sink.u32(recoded.size());
    sink.bytes(recoded);
  }
  return std::move(sink.out);
}

inline double bits_per_pixel(std::size_t stream_bytes, const Shape& extents) {
  const std::size_t pixels = shape_product(extents);
  if (pixels == 0) throw DimensionError("bits_per_pixel: empty extents");
  return 8.0 * double(stream_bytes) / double(pixels);
}

inline double bits_per_pixel(std::span<const std::uint8_t> stream, const Shape& extents) {
  return bits_per_pixel(stream.size(), extents);
}

}  // namespace frappe
