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

// Binary PGM (P5) and PPM (P6), 8-bit. Pixels map to [-1, 1] as v/127.5 - 1.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "frappe/error.hpp"
#include "frappe/numerics/tensor.hpp"

namespace frappe {

// Interleaved 8-bit image.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;  // [height][width][channels]

  bool operator==(const Image&) const = default;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::kIo, "cannot open " + path.string(), 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(FormatErrc::kIo, "cannot write " + path.string(), 0);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrc::kIo, "short write to " + path.string(), 0);
}

inline Image decode_pnm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&]() -> std::size_t {
    skip_space();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw FormatError(FormatErrc::kCorruptPayload, "bad PNM header", pos);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError(FormatErrc::kBadMagic, "not a binary PGM/PPM file", 0);
  }
  pos = 2;
  Image img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  img.width = number();
  img.height = number();
  const std::size_t maxval = number();
  if (maxval != 255) throw FormatError(FormatErrc::kCorruptPayload, "only 8-bit PNM supported", pos);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError(FormatErrc::kCorruptPayload, "bad PNM header", pos);
  ++pos;
  const std::size_t n = img.width * img.height * img.channels;
  if (img.width == 0 || img.height == 0) throw FormatError(FormatErrc::kCorruptPayload, "empty PNM image", pos);
  if (bytes.size() - pos < n) throw FormatError(FormatErrc::kTruncated, "PNM pixel data truncated", bytes.size());
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

inline std::vector<std::uint8_t> encode_pnm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw DimensionError("PNM needs 1 or 3 channels");
  const std::string head = std::string(img.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width) + " " +
                           std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

inline Image read_image(const std::filesystem::path& path) { return decode_pnm(read_file(path)); }
inline void write_image(const std::filesystem::path& path, const Image& img) { write_file(path, encode_pnm(img)); }

// [C, H, W] in [-1, 1].
inline Tensor<float> image_to_tensor(const Image& img) {
  Tensor<float> t(Shape{img.channels, img.height, img.width});
  const std::size_t hw = img.width * img.height;
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t c = 0; c < img.channels; ++c) {
      t.data()[c * hw + i] = static_cast<float>(img.pixels[i * img.channels + c] / 127.5 - 1.0);
    }
  }
  return t;
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round((v + 1.0) * 127.5), 0.0, 255.0));
}

inline Image tensor_to_image(const Tensor<float>& t) {
  if (t.rank() != 3) throw DimensionError("image tensor must be [C, H, W], got " + shape_string(t.shape()));
  Image img;
  img.channels = t.shape()[0];
  img.height = t.shape()[1];
  img.width = t.shape()[2];
  const std::size_t hw = img.width * img.height;
  img.pixels.resize(hw * img.channels);
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t c = 0; c < img.channels; ++c) img.pixels[i * img.channels + c] = to_byte(t.data()[c * hw + i]);
  }
  return img;
}

// Centered crop to at most `size` on each axis, rounded down to `multiple`.
inline Image center_crop(const Image& img, std::size_t size, std::size_t multiple) {
  const std::size_t w = std::min(size, img.width) / multiple * multiple;
  const std::size_t h = std::min(size, img.height) / multiple * multiple;
  if (w == 0 || h == 0) {
    throw DimensionError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                         " is smaller than the required multiple " + std::to_string(multiple));
  }
  const std::size_t x0 = (img.width - w) / 2, y0 = (img.height - h) / 2;
  Image out{w, h, img.channels, {}};
  out.pixels.reserve(w * h * img.channels);
  for (std::size_t y = 0; y < h; ++y) {
    const auto* row = img.pixels.data() + ((y0 + y) * img.width + x0) * img.channels;
    out.pixels.insert(out.pixels.end(), row, row + w * img.channels);
  }
  return out;
}

}  // namespace frappe
