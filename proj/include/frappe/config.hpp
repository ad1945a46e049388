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

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "frappe/error.hpp"
#include "frappe/numerics/tensor.hpp"

namespace frappe {

struct ScaleSpec {
  std::size_t channels = 1;  // n_s
  std::size_t patch = 1;     // p_s

  bool operator==(const ScaleSpec&) const = default;
};

inline bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

// One codec instance: input channels C, spatial rank D, scale groups in
// transmission order (coarse first), and the decoder patch size p_d.
//
// Latent channels are numbered globally m = 0..N-1 by walking the scale
// groups in order; transmitting n channels keeps the first n.
struct CodecConfig {
  std::size_t input_channels = 3;
  std::size_t rank = 2;
  std::vector<ScaleSpec> scales;
  std::size_t decoder_patch = 8;

  bool operator==(const CodecConfig&) const = default;

  // RGB images, five scale groups, 21 channels.
  static CodecConfig frappe_image() {
    return CodecConfig{3, 2, {{3, 32}, {6, 16}, {3, 8}, {6, 4}, {3, 2}}, 8};
  }

  std::size_t total_channels() const {
    std::size_t n = 0;
    for (const auto& s : scales) n += s.channels;
    return n;
  }

  // Index of scale s's first channel in the global order.
  std::size_t scale_offset(std::size_t s) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < s; ++i) off += scales.at(i).channels;
    return off;
  }

  struct Slot {
    std::size_t scale;
    std::size_t index;  // within the scale group
  };

  Slot locate(std::size_t m) const {
    std::size_t off = 0;
    for (std::size_t s = 0; s < scales.size(); ++s) {
      if (m < off + scales[s].channels) return {s, m - off};
      off += scales[s].channels;
    }
    throw ParameterError("channel " + std::to_string(m) + " outside " + std::to_string(off) + " channels");
  }

  // Channels of each scale group that are populated when n are transmitted.
  std::vector<std::size_t> populated(std::size_t n) const {
    check_channel_count(n);
    std::vector<std::size_t> k(scales.size(), 0);
    std::size_t left = n;
    for (std::size_t s = 0; s < scales.size() && left > 0; ++s) {
      k[s] = std::min(left, scales[s].channels);
      left -= k[s];
    }
    return k;
  }

  void check_channel_count(std::size_t n) const {
    if (n < 1 || n > total_channels()) {
      throw ParameterError("channel count " + std::to_string(n) + " outside [1, " +
                           std::to_string(total_channels()) + "]");
    }
  }

  // Largest patch size; image extents must be multiples of it.
  std::size_t max_patch() const {
    std::size_t p = decoder_patch;
    for (const auto& s : scales) p = std::max(p, s.patch);
    return p;
  }

  // Throws DimensionError naming the first scale that does not tile `extents`.
  void check_extents(const Shape& extents) const {
    if (extents.size() != rank) {
      throw DimensionError("expected " + std::to_string(rank) + " spatial extents, got " +
                           shape_string(extents));
    }
    for (std::size_t s = 0; s < scales.size(); ++s) {
      for (std::size_t d = 0; d < rank; ++d) {
        if (extents[d] % scales[s].patch != 0) {
          throw DimensionError("extent " + std::to_string(extents[d]) + " on axis " + std::to_string(d + 1) +
                               " is not a multiple of scale " + std::to_string(s) + "'s patch size " +
                               std::to_string(scales[s].patch) + " (all extents must be multiples of " +
                               std::to_string(max_patch()) + ")");
        }
      }
    }
    for (std::size_t d = 0; d < rank; ++d) {
      if (extents[d] % decoder_patch != 0) {
        throw DimensionError("extent " + std::to_string(extents[d]) + " on axis " + std::to_string(d + 1) +
                             " is not a multiple of the decoder patch size " + std::to_string(decoder_patch));
      }
    }
  }

  // Field limits follow the stream header widths (u8 counts, u16 patches).
  void validate() const {
    auto fail = [](const std::string& m) { throw ParameterError("invalid codec config: " + m); };
    if (input_channels < 1 || input_channels > 255) fail("input channels must be in [1, 255]");
    if (rank < 1 || rank > 3) fail("spatial rank must be 1, 2 or 3");
    if (scales.empty() || scales.size() > 255) fail("scale group count must be in [1, 255]");
    if (!is_power_of_two(decoder_patch) || decoder_patch > 32768) fail("decoder patch must be a power of two");
    for (std::size_t s = 0; s < scales.size(); ++s) {
      if (scales[s].channels < 1 || scales[s].channels > 255) {
        fail("scale " + std::to_string(s) + " channel count must be in [1, 255]");
      }
      if (!is_power_of_two(scales[s].patch) || scales[s].patch > 32768) {
        fail("scale " + std::to_string(s) + " patch " + std::to_string(scales[s].patch) +
             " is not a power of two");
      }
    }
    if (total_channels() > 255) fail("at most 255 latent channels");
  }

  std::string describe() const {
    std::string s = "C=" + std::to_string(input_channels) + " D=" + std::to_string(rank) + " scales=[";
    for (std::size_t i = 0; i < scales.size(); ++i) {
      s += (i ? "," : "") + std::string("(") + std::to_string(scales[i].channels) + "," +
           std::to_string(scales[i].patch) + ")";
    }
    return s + "] p_d=" + std::to_string(decoder_patch) + " N=" + std::to_string(total_channels());
  }
};

inline std::size_t int_pow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  while (exp--) r *= base;
  return r;
}

}  // namespace frappe
