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

// Thin wrapper over the CharLS C API (an independent T.87 implementation).
// Only the handful of entry points needed here are declared, so the
// library's headers are not required.

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "frappe/entropy/jpegls.hpp"

extern "C" {
struct charls_jpegls_encoder;
struct charls_jpegls_decoder;
struct charls_frame_info {
  std::uint32_t width;
  std::uint32_t height;
  std::int32_t bits_per_sample;
  std::int32_t component_count;
};
charls_jpegls_encoder* charls_jpegls_encoder_create();
void charls_jpegls_encoder_destroy(const charls_jpegls_encoder*);
std::int32_t charls_jpegls_encoder_set_frame_info(charls_jpegls_encoder*, const charls_frame_info*);
std::int32_t charls_jpegls_encoder_get_estimated_destination_size(const charls_jpegls_encoder*, std::size_t*);
std::int32_t charls_jpegls_encoder_set_destination_buffer(charls_jpegls_encoder*, void*, std::size_t);
std::int32_t charls_jpegls_encoder_encode_from_buffer(charls_jpegls_encoder*, const void*, std::size_t,
                                                      std::uint32_t);
std::int32_t charls_jpegls_encoder_get_bytes_written(const charls_jpegls_encoder*, std::size_t*);
charls_jpegls_decoder* charls_jpegls_decoder_create();
void charls_jpegls_decoder_destroy(const charls_jpegls_decoder*);
std::int32_t charls_jpegls_decoder_set_source_buffer(charls_jpegls_decoder*, const void*, std::size_t);
std::int32_t charls_jpegls_decoder_read_header(charls_jpegls_decoder*);
std::int32_t charls_jpegls_decoder_get_frame_info(const charls_jpegls_decoder*, charls_frame_info*);
std::int32_t charls_jpegls_decoder_get_destination_size(const charls_jpegls_decoder*, std::uint32_t,
                                                        std::size_t*);
std::int32_t charls_jpegls_decoder_decode_to_buffer(charls_jpegls_decoder*, void*, std::size_t, std::uint32_t);
}

namespace reference {

inline void check(std::int32_t rc, const char* what) {
  if (rc != 0) throw std::runtime_error(std::string("charls ") + what + " failed with " + std::to_string(rc));
}

inline std::vector<std::uint8_t> encode(const frappe::entropy::Plane& p) {
  charls_jpegls_encoder* enc = charls_jpegls_encoder_create();
  if (!enc) throw std::runtime_error("charls encoder create failed");
  std::vector<std::uint8_t> out;
  try {
    const charls_frame_info info{std::uint32_t(p.width), std::uint32_t(p.height), 8, 1};
    check(charls_jpegls_encoder_set_frame_info(enc, &info), "set_frame_info");
    std::size_t size = 0;
    check(charls_jpegls_encoder_get_estimated_destination_size(enc, &size), "estimate");
    out.resize(size);
    check(charls_jpegls_encoder_set_destination_buffer(enc, out.data(), out.size()), "set_destination");
    check(charls_jpegls_encoder_encode_from_buffer(enc, p.samples.data(), p.samples.size(), 0), "encode");
    std::size_t written = 0;
    check(charls_jpegls_encoder_get_bytes_written(enc, &written), "bytes_written");
    out.resize(written);
  } catch (...) {
    charls_jpegls_encoder_destroy(enc);
    throw;
  }
  charls_jpegls_encoder_destroy(enc);
  return out;
}

inline frappe::entropy::Plane decode(const std::vector<std::uint8_t>& bytes) {
  charls_jpegls_decoder* dec = charls_jpegls_decoder_create();
  if (!dec) throw std::runtime_error("charls decoder create failed");
  frappe::entropy::Plane p;
  try {
    check(charls_jpegls_decoder_set_source_buffer(dec, bytes.data(), bytes.size()), "set_source");
    check(charls_jpegls_decoder_read_header(dec), "read_header");
    charls_frame_info info{};
    check(charls_jpegls_decoder_get_frame_info(dec, &info), "frame_info");
    if (info.bits_per_sample != 8 || info.component_count != 1) throw std::runtime_error("unexpected frame");
    std::size_t size = 0;
    check(charls_jpegls_decoder_get_destination_size(dec, 0, &size), "destination_size");
    std::vector<std::uint8_t> samples(size);
    check(charls_jpegls_decoder_decode_to_buffer(dec, samples.data(), samples.size(), 0), "decode");
    p = frappe::entropy::Plane(info.width, info.height, std::move(samples));
  } catch (...) {
    charls_jpegls_decoder_destroy(dec);
    throw;
  }
  charls_jpegls_decoder_destroy(dec);
  return p;
}

}  // namespace reference
