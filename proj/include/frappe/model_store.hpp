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

// Model file: one encoder plus a decoder snapshot per channel count.
//
// Named-array container, little-endian throughout:
//
//   "FRPM" | version u32 | entry count u32
//   entries: name length u16 | name | dtype u8 (0 f32, 1 i32) | rank u8 |
//            rank x extent u32 | payload offset u64 | payload bytes u64
//   payloads
//   CRC-32 (zlib polynomial) of every preceding byte, u32
//
// Arrays:
//   config                     i32 [C, D, p_d, S, n_0, p_0, ..., n_S-1, p_S-1]
//   encoder.kernel.<s>, encoder.bias.<s>, encoder.sigma, encoder.multiplier
//   decoder.<n>.meta           i32 [C_d, width, blocks, C, p_d, D, clamp, crc of channels < n]
//   decoder.<n>.<parameter>    f32, in SynthesisWeights::parameters() order

#pragma once

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "frappe/analysis.hpp"
#include "frappe/config.hpp"
#include "frappe/error.hpp"
#include "frappe/image_io.hpp"
#include "frappe/synthesis.hpp"

namespace frappe {

inline constexpr char kModelMagic[4] = {'F', 'R', 'P', 'M'};
inline constexpr std::uint32_t kModelVersion = 1;

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t at = 0;
  while (at < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - at, 1u << 30));
    crc = ::crc32(crc, bytes.data() + at, chunk);
    at += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

namespace store {

enum class DType : std::uint8_t { kF32 = 0, kI32 = 1 };

struct Entry {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::uint64_t offset = 0;
  std::uint64_t bytes = 0;
};

struct Array {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  std::vector<std::uint8_t> payload;  // little-endian
};

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_le(std::span<const std::uint8_t> b, std::size_t at, int n) {
  std::uint64_t v = 0;
  for (int i = n - 1; i >= 0; --i) v = (v << 8) | b[at + i];
  return v;
}

inline Array f32_array(std::string name, const Tensor<float>& t) {
  Array a{std::move(name), DType::kF32, t.shape(), {}};
  a.payload.reserve(4 * t.size());
  for (float v : t.values()) put_le(a.payload, std::bit_cast<std::uint32_t>(v), 4);
  return a;
}

inline Array i32_array(std::string name, const std::vector<std::int64_t>& v) {
  Array a{std::move(name), DType::kI32, Shape{v.size()}, {}};
  for (auto x : v) put_le(a.payload, static_cast<std::uint32_t>(static_cast<std::int32_t>(x)), 4);
  return a;
}

inline std::vector<std::uint8_t> write_container(const std::vector<Array>& arrays) {
  std::size_t index_size = 12;
  for (const auto& a : arrays) index_size += 2 + a.name.size() + 2 + 4 * a.shape.size() + 16;
  std::vector<std::uint8_t> out;
  for (char c : kModelMagic) out.push_back(static_cast<std::uint8_t>(c));
  put_le(out, kModelVersion, 4);
  put_le(out, arrays.size(), 4);
  std::uint64_t offset = index_size;
  for (const auto& a : arrays) {
    if (a.name.size() > 0xFFFF) throw ParameterError("array name too long");
    put_le(out, a.name.size(), 2);
    out.insert(out.end(), a.name.begin(), a.name.end());
    out.push_back(static_cast<std::uint8_t>(a.dtype));
    out.push_back(static_cast<std::uint8_t>(a.shape.size()));
    for (auto e : a.shape) put_le(out, e, 4);
    put_le(out, offset, 8);
    put_le(out, a.payload.size(), 8);
    offset += a.payload.size();
  }
  for (const auto& a : arrays) out.insert(out.end(), a.payload.begin(), a.payload.end());
  put_le(out, crc32_of(out), 4);
  return out;
}

// Verifies the checksum and parses the index.
inline std::vector<Entry> read_index(std::span<const std::uint8_t> file) {
  if (file.size() < 16) throw FormatError(FormatErrc::kTruncated, "model file too short", file.size());
  for (int i = 0; i < 4; ++i) {
    if (file[i] != static_cast<std::uint8_t>(kModelMagic[i])) {
      throw FormatError(FormatErrc::kBadMagic, "not a FRAPPE model file", i);
    }
  }
  const std::size_t body = file.size() - 4;
  const std::uint32_t stored = static_cast<std::uint32_t>(get_le(file, body, 4));
  const std::uint32_t actual = crc32_of(file.first(body));
  if (stored != actual) {
    std::ostringstream os;
    os << "model checksum " << std::hex << actual << " does not match stored " << stored;
    throw FormatError(FormatErrc::kChecksum, os.str(), body);
  }
  if (get_le(file, 4, 4) != kModelVersion) {
    throw FormatError(FormatErrc::kBadVersion, "unsupported model version " + std::to_string(get_le(file, 4, 4)), 4);
  }
  const std::size_t count = get_le(file, 8, 4);
  std::vector<Entry> entries;
  std::size_t at = 12;
  auto need = [&](std::size_t n) {
    if (at + n > body) throw FormatError(FormatErrc::kTruncated, "model index truncated", at);
  };
  for (std::size_t i = 0; i < count; ++i) {
    Entry e;
    need(2);
    const std::size_t len = get_le(file, at, 2);
    at += 2;
    need(len + 2);
    e.name.assign(reinterpret_cast<const char*>(file.data() + at), len);
    at += len;
    e.dtype = static_cast<DType>(file[at++]);
    if (e.dtype != DType::kF32 && e.dtype != DType::kI32) {
      throw FormatError(FormatErrc::kCorruptPayload, "unknown dtype for " + e.name, at - 1);
    }
    const std::size_t rank = file[at++];
    need(4 * rank + 16);
    for (std::size_t d = 0; d < rank; ++d, at += 4) e.shape.push_back(get_le(file, at, 4));
    e.offset = get_le(file, at, 8);
    e.bytes = get_le(file, at + 8, 8);
    at += 16;
    if (e.bytes != 4 * shape_product(e.shape) || e.offset + e.bytes > body) {
      throw FormatError(FormatErrc::kLengthMismatch, "array " + e.name + " has inconsistent extent", at);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace store

struct ModelSnapshotSet {
  CodecConfig config;
  EncoderWeights encoder;
  std::map<std::size_t, SynthesisWeights<float>> decoders;
  // CRC of the encoder channels each snapshot was trained against.
  std::map<std::size_t, std::uint32_t> encoder_crc;

  std::vector<std::size_t> available() const {
    std::vector<std::size_t> n;
    for (const auto& [k, v] : decoders) n.push_back(k);
    return n;
  }

  // Stores a snapshot and stamps it with the current first-n encoder channels.
  void add_decoder(std::size_t n, SynthesisWeights<float> weights);
};

inline std::vector<store::Array> encoder_arrays(const EncoderWeights& w) {
  std::vector<store::Array> out;
  for (std::size_t s = 0; s < w.kernels.size(); ++s) {
    out.push_back(store::f32_array("encoder.kernel." + std::to_string(s), w.kernels[s]));
    out.push_back(store::f32_array("encoder.bias." + std::to_string(s), w.biases[s]));
  }
  out.push_back(store::f32_array("encoder.sigma", w.sigma));
  out.push_back(store::f32_array("encoder.multiplier", w.multiplier));
  return out;
}

inline std::uint32_t encoder_checksum(const EncoderWeights& w) {
  std::vector<std::uint8_t> bytes;
  for (const auto& a : encoder_arrays(w)) {
    bytes.insert(bytes.end(), a.name.begin(), a.name.end());
    bytes.insert(bytes.end(), a.payload.begin(), a.payload.end());
  }
  return crc32_of(bytes);
}

// Checksum of the weights the first n channels depend on.
inline std::uint32_t encoder_checksum(const EncoderWeights& w, const CodecConfig& config, std::size_t n) {
  const auto k = config.populated(n);
  std::vector<std::uint8_t> bytes;
  auto put = [&](float v) { store::put_le(bytes, std::bit_cast<std::uint32_t>(v), 4); };
  for (std::size_t s = 0; s < k.size(); ++s) {
    const std::size_t per = k[s] == 0 ? 0 : w.kernels[s].size() / config.scales[s].channels;
    for (std::size_t i = 0; i < k[s] * per; ++i) put(w.kernels[s][i]);
    for (std::size_t i = 0; i < k[s]; ++i) put(w.biases[s][i]);
  }
  for (std::size_t m = 0; m < n; ++m) {
    put(w.sigma[m]);
    put(w.multiplier[m]);
  }
  return crc32_of(bytes);
}

inline void ModelSnapshotSet::add_decoder(std::size_t n, SynthesisWeights<float> weights) {
  encoder_crc[n] = encoder_checksum(encoder, config, n);
  decoders[n] = std::move(weights);
}

inline void check_snapshot_set(const ModelSnapshotSet& set) {
  set.config.validate();
  set.encoder.validate(set.config);
  for (const auto& [n, w] : set.decoders) {
    set.config.check_channel_count(n);
    const std::size_t cd = decoder_input_width(set.config, n);
    if (w.input_width != cd) {
      throw SnapshotError("snapshot n=" + std::to_string(n) + " takes " + std::to_string(w.input_width) +
                          " adapted channels, config implies " + std::to_string(cd));
    }
    if (w.output_channels != set.config.input_channels || w.decoder_patch != set.config.decoder_patch ||
        w.rank != set.config.rank) {
      throw SnapshotError("snapshot n=" + std::to_string(n) + " geometry does not match the codec config");
    }
    const auto it = set.encoder_crc.find(n);
    if (it == set.encoder_crc.end() || it->second != encoder_checksum(set.encoder, set.config, n)) {
      throw SnapshotError("snapshot n=" + std::to_string(n) +
                          " was trained against different encoder weights than the ones being stored");
    }
  }
}

inline std::vector<std::uint8_t> serialize(const ModelSnapshotSet& set) {
  check_snapshot_set(set);
  std::vector<store::Array> arrays;
  std::vector<std::int64_t> cfg{std::int64_t(set.config.input_channels), std::int64_t(set.config.rank),
                                std::int64_t(set.config.decoder_patch), std::int64_t(set.config.scales.size())};
  for (const auto& s : set.config.scales) {
    cfg.push_back(std::int64_t(s.channels));
    cfg.push_back(std::int64_t(s.patch));
  }
  arrays.push_back(store::i32_array("config", cfg));
  for (auto& a : encoder_arrays(set.encoder)) arrays.push_back(std::move(a));
  for (const auto& [n, w] : set.decoders) {
    const std::string pre = "decoder." + std::to_string(n) + ".";
    arrays.push_back(store::i32_array(
        pre + "meta", {std::int64_t(w.input_width), std::int64_t(w.width), std::int64_t(w.block_count()),
                       std::int64_t(w.output_channels), std::int64_t(w.decoder_patch), std::int64_t(w.rank),
                       std::int64_t(w.clamp_output), std::int64_t(static_cast<std::int32_t>(set.encoder_crc.at(n)))}));
    for (const auto* p : w.parameters()) arrays.push_back(store::f32_array(pre + p->name, p->value));
  }
  return store::write_container(arrays);
}

// Random access to a model file; decoder snapshots are materialized on
// demand from their recorded offsets.
class ModelReader {
 public:
  explicit ModelReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {
    entries_ = store::read_index(bytes_);
    for (std::size_t i = 0; i < entries_.size(); ++i) by_name_[entries_[i].name] = i;
    parse_config();
    parse_encoder();
    for (const auto& e : entries_) {
      if (e.name.starts_with("decoder.") && e.name.ends_with(".meta")) {
        const std::string mid = e.name.substr(8, e.name.size() - 8 - 5);
        std::size_t n = 0;
        try {
          n = std::stoul(mid);
        } catch (...) {
          throw FormatError(FormatErrc::kInconsistent, "bad snapshot name " + e.name, e.offset);
        }
        available_.push_back(n);
      }
    }
    std::sort(available_.begin(), available_.end());
  }

  static ModelReader open(const std::filesystem::path& path) { return ModelReader(read_file(path)); }

  const CodecConfig& config() const { return config_; }
  const EncoderWeights& encoder() const { return encoder_; }
  const std::vector<std::size_t>& available() const { return available_; }
  const std::vector<store::Entry>& entries() const { return entries_; }
  std::uint32_t checksum() const { return static_cast<std::uint32_t>(store::get_le(bytes_, bytes_.size() - 4, 4)); }

  SynthesisWeights<float> decoder(std::size_t n) const {
    if (!std::binary_search(available_.begin(), available_.end(), n)) throw missing(n, available_);
    const std::string pre = "decoder." + std::to_string(n) + ".";
    const auto meta = ints(pre + "meta");
    if (meta.size() != 8) throw FormatError(FormatErrc::kInconsistent, pre + "meta has wrong length", 0);
    Rng unused(0);
    auto w = SynthesisWeights<float>::init(std::size_t(meta[0]), std::size_t(meta[1]), std::size_t(meta[2]),
                                           std::size_t(meta[3]), std::size_t(meta[4]), std::size_t(meta[5]), unused);
    w.clamp_output = meta[6] != 0;
    for (auto* p : w.parameters()) {
      Tensor<float> t = floats(pre + p->name);
      if (t.shape() != p->value.shape()) {
        throw FormatError(FormatErrc::kInconsistent,
                          pre + p->name + " has shape " + shape_string(t.shape()) + ", expected " +
                              shape_string(p->value.shape()),
                          entry(pre + p->name).offset);
      }
      p->value = std::move(t);
    }
    if (w.input_width != decoder_input_width(config_, n)) {
      throw FormatError(FormatErrc::kInconsistent, "snapshot n=" + std::to_string(n) + " has the wrong input width",
                        entry(pre + "meta").offset);
    }
    if (static_cast<std::uint32_t>(meta[7]) != encoder_checksum(encoder_, config_, n)) {
      throw FormatError(FormatErrc::kInconsistent,
                        "snapshot n=" + std::to_string(n) + " was trained against different encoder weights",
                        entry(pre + "meta").offset);
    }
    return w;
  }

  ModelSnapshotSet load_all() const {
    ModelSnapshotSet set;
    set.config = config_;
    set.encoder = encoder_;
    for (std::size_t n : available_) set.add_decoder(n, decoder(n));
    return set;
  }

  static SnapshotError missing(std::size_t n, const std::vector<std::size_t>& have) {
    std::string list;
    for (std::size_t i = 0; i < have.size(); ++i) list += (i ? ", " : "") + std::to_string(have[i]);
    return SnapshotError("no decoder snapshot for n=" + std::to_string(n) + "; available: {" + list + "}");
  }

 private:
  const store::Entry& entry(const std::string& name) const {
    const auto it = by_name_.find(name);
    if (it == by_name_.end()) throw FormatError(FormatErrc::kInconsistent, "model file lacks array " + name, 0);
    return entries_[it->second];
  }

  std::vector<std::int32_t> ints(const std::string& name) const {
    const auto& e = entry(name);
    if (e.dtype != store::DType::kI32) throw FormatError(FormatErrc::kInconsistent, name + " is not i32", e.offset);
    std::vector<std::int32_t> out(shape_product(e.shape));
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<std::int32_t>(static_cast<std::uint32_t>(store::get_le(bytes_, e.offset + 4 * i, 4)));
    }
    return out;
  }

  Tensor<float> floats(const std::string& name) const {
    const auto& e = entry(name);
    if (e.dtype != store::DType::kF32) throw FormatError(FormatErrc::kInconsistent, name + " is not f32", e.offset);
    std::vector<float> out(shape_product(e.shape));
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = std::bit_cast<float>(static_cast<std::uint32_t>(store::get_le(bytes_, e.offset + 4 * i, 4)));
    }
    return Tensor<float>(e.shape, std::move(out));
  }

  void parse_config() {
    const auto c = ints("config");
    if (c.size() < 4 || c.size() != 4 + 2 * std::size_t(std::max(0, c[3]))) {
      throw FormatError(FormatErrc::kInconsistent, "config array has wrong length", entry("config").offset);
    }
    config_.input_channels = std::size_t(c[0]);
    config_.rank = std::size_t(c[1]);
    config_.decoder_patch = std::size_t(c[2]);
    config_.scales.clear();
    for (int s = 0; s < c[3]; ++s) config_.scales.push_back({std::size_t(c[4 + 2 * s]), std::size_t(c[5 + 2 * s])});
    try {
      config_.validate();
    } catch (const ParameterError& e) {
      throw FormatError(FormatErrc::kInconsistent, e.what(), entry("config").offset);
    }
  }

  void parse_encoder() {
    encoder_ = EncoderWeights::zeros(config_);
    auto fill = [&](Tensor<float>& dst, const std::string& name) {
      Tensor<float> t = floats(name);
      if (t.shape() != dst.shape()) {
        throw FormatError(FormatErrc::kInconsistent,
                          name + " has shape " + shape_string(t.shape()) + ", config implies " +
                              shape_string(dst.shape()),
                          entry(name).offset);
      }
      dst = std::move(t);
    };
    for (std::size_t s = 0; s < config_.scales.size(); ++s) {
      fill(encoder_.kernels[s], "encoder.kernel." + std::to_string(s));
      fill(encoder_.biases[s], "encoder.bias." + std::to_string(s));
    }
    fill(encoder_.sigma, "encoder.sigma");
    fill(encoder_.multiplier, "encoder.multiplier");
    try {
      encoder_.validate(config_);
    } catch (const Error& e) {
      throw FormatError(FormatErrc::kInconsistent, e.what(), entry("encoder.sigma").offset);
    }
  }

  std::vector<std::uint8_t> bytes_;
  std::vector<store::Entry> entries_;
  std::map<std::string, std::size_t> by_name_;
  CodecConfig config_;
  EncoderWeights encoder_;
  std::vector<std::size_t> available_;
};

inline ModelSnapshotSet deserialize(std::vector<std::uint8_t> bytes) { return ModelReader(std::move(bytes)).load_all(); }

inline void save(const std::filesystem::path& path, const ModelSnapshotSet& set) { write_file(path, serialize(set)); }

inline ModelSnapshotSet load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

inline const SynthesisWeights<float>& select_decoder(const ModelSnapshotSet& set, std::size_t n) {
  const auto it = set.decoders.find(n);
  if (it == set.decoders.end()) throw ModelReader::missing(n, set.available());
  return it->second;
}

// One line per array: name, dtype, shape, offset, bytes.
inline std::string describe_index(const ModelReader& reader) {
  std::ostringstream os;
  os << "config=" << reader.config().describe() << "\n";
  os << "snapshots=";
  for (std::size_t i = 0; i < reader.available().size(); ++i) os << (i ? "," : "") << reader.available()[i];
  os << "\n";
  std::ostringstream crc;
  crc << std::hex << reader.checksum();
  os << "checksum=" << crc.str() << "\n";
  for (const auto& e : reader.entries()) {
    os << e.name << " " << (e.dtype == store::DType::kF32 ? "f32" : "i32") << " " << shape_string(e.shape)
       << " offset=" << e.offset << " bytes=" << e.bytes << "\n";
  }
  return os.str();
}

}  // namespace frappe
