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

// Lossless single-component JPEG-LS (ITU-T T.87 / LOCO-I).
//
// Median edge-detecting prediction, 365 regular contexts with bias
// cancellation, run mode with the J[] ladder and two run-interruption
// contexts, limited-length Golomb-Rice codes, and 0xFF bit stuffing.
// The encoder emits SOI, SOF55, SOS, the scan, EOI, using the default
// thresholds for the sample precision; the decoder also accepts LSE
// preset-parameter segments and skips APPn/COM segments.

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <span>
#include <string>
#include <vector>

#include "frappe/error.hpp"

namespace frappe::entropy {

// 8-bit grayscale image, row-major.
struct Plane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> samples;

  Plane() = default;
  Plane(std::size_t w, std::size_t h, std::vector<std::uint8_t> s) : width(w), height(h), samples(std::move(s)) {
    if (samples.size() != width * height) {
      throw DimensionError("plane " + std::to_string(width) + "x" + std::to_string(height) + " holds " +
                           std::to_string(samples.size()) + " samples");
    }
  }
  Plane(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), samples(w * h, fill) {}

  bool operator==(const Plane&) const = default;
  std::uint8_t at(std::size_t x, std::size_t y) const { return samples[y * width + x]; }
};

namespace jpegls {

inline constexpr std::uint8_t kMarkerSoi = 0xD8;
inline constexpr std::uint8_t kMarkerEoi = 0xD9;
inline constexpr std::uint8_t kMarkerSos = 0xDA;
inline constexpr std::uint8_t kMarkerSof55 = 0xF7;
inline constexpr std::uint8_t kMarkerLse = 0xF8;
inline constexpr std::uint8_t kMarkerCom = 0xFE;

inline constexpr std::array<int, 32> kJ = {0, 0, 0, 0, 1, 1, 1, 1, 2,  2,  2,  2,  3,  3,  3,  3,
                                           4, 4, 5, 5, 6, 6, 7, 7, 8, 9, 10, 11, 12, 13, 14, 15};

inline constexpr int kMinC = -128;
inline constexpr int kMaxC = 127;
inline constexpr int kRegularContexts = 365;

// Coding parameters derived from MAXVAL (lossless, NEAR = 0).
struct Params {
  int maxval = 255;
  int t1 = 3;
  int t2 = 7;
  int t3 = 21;
  int reset = 64;

  int range() const { return maxval + 1; }
  int qbpp() const {
    int b = 0;
    while ((1 << b) < range()) ++b;
    return b;
  }
  int bpp() const { return std::max(2, qbpp()); }
  int limit() const { return 2 * (bpp() + std::max(8, bpp())); }

  // Default thresholds for a given MAXVAL.
  static Params defaults(int maxval) {
    Params p;
    p.maxval = maxval;
    p.reset = 64;
    if (maxval >= 128) {
      const int factor = (std::min(maxval, 4095) + 128) / 256;
      p.t1 = std::clamp(factor * (3 - 2) + 2, 1, maxval);
      p.t2 = std::clamp(factor * (7 - 3) + 3, p.t1, maxval);
      p.t3 = std::clamp(factor * (21 - 4) + 4, p.t2, maxval);
    } else {
      const int factor = 256 / (maxval + 1);
      p.t1 = std::clamp(std::max(2, 3 / factor), 1, maxval);
      p.t2 = std::clamp(std::max(3, 7 / factor), p.t1, maxval);
      p.t3 = std::clamp(std::max(4, 21 / factor), p.t2, maxval);
    }
    return p;
  }
};

class BitWriter {
 public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void put_bit(unsigned bit) {
    cur_ = (cur_ << 1) | (bit & 1u);
    if (++filled_ == capacity()) emit();
  }

  // `count` low bits of `value`, most significant first.
  void put_bits(std::uint32_t value, int count) {
    for (int i = count - 1; i >= 0; --i) put_bit((value >> i) & 1u);
  }

  void put_zeros(int count) {
    for (int i = 0; i < count; ++i) put_bit(0);
  }

  // Zero-pad to a byte boundary; a trailing 0xFF gets its stuffed zero bit.
  void finish() {
    while (filled_ != 0) put_bit(0);
    if (after_ff_) {
      out_.push_back(0x00);
      after_ff_ = false;
    }
  }

 private:
  int capacity() const { return after_ff_ ? 7 : 8; }
  void emit() {
    const auto byte = static_cast<std::uint8_t>(cur_);
    out_.push_back(byte);
    after_ff_ = byte == 0xFF;
    cur_ = 0;
    filled_ = 0;
  }

  std::vector<std::uint8_t>& out_;
  std::uint32_t cur_ = 0;
  int filled_ = 0;
  bool after_ff_ = false;
};

class BitReader {
 public:
  BitReader(std::span<const std::uint8_t> data, std::size_t pos) : data_(data), pos_(pos) {}

  unsigned get_bit() {
    if (avail_ == 0) load();
    --avail_;
    return (cur_ >> avail_) & 1u;
  }

  std::uint32_t get_bits(int count) {
    std::uint32_t v = 0;
    for (int i = 0; i < count; ++i) v = (v << 1) | get_bit();
    return v;
  }

  // Offset of the first byte after the scan data (the next marker).
  std::size_t end_of_scan() const {
    std::size_t p = pos_;
    while (p + 1 < data_.size() && !(data_[p] == 0xFF && data_[p + 1] >= 0x80)) ++p;
    return p;
  }

  std::size_t position() const { return pos_; }

 private:
  void load() {
    if (pos_ >= data_.size()) throw FormatError(FormatErrc::kCorruptPayload, "scan data runs past end", pos_);
    const std::uint8_t byte = data_[pos_];
    if (after_ff_) {
      if (byte & 0x80) throw FormatError(FormatErrc::kCorruptPayload, "scan data interrupted by marker", pos_);
      cur_ = byte;
      avail_ = 7;
    } else {
      if (byte == 0xFF && pos_ + 1 < data_.size() && data_[pos_ + 1] >= 0x80) {
        throw FormatError(FormatErrc::kCorruptPayload, "scan data interrupted by marker", pos_);
      }
      cur_ = byte;
      avail_ = 8;
    }
    after_ff_ = byte == 0xFF;
    ++pos_;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_;
  std::uint32_t cur_ = 0;
  int avail_ = 0;
  bool after_ff_ = false;
};

// Shared context state and the per-sample coding steps.
class ScanState {
 public:
  explicit ScanState(const Params& p) : p_(p) {
    const int a_init = std::max(2, (p_.range() + 32) / 64);
    a_.fill(a_init);
    b_.fill(0);
    c_.fill(0);
    n_.fill(1);
    ri_a_ = {a_init, a_init};
    ri_n_ = {1, 1};
    ri_nn_ = {0, 0};
  }

  int quantize_gradient(int d) const {
    if (d <= -p_.t3) return -4;
    if (d <= -p_.t2) return -3;
    if (d <= -p_.t1) return -2;
    if (d < 0) return -1;
    if (d == 0) return 0;
    if (d < p_.t1) return 1;
    if (d < p_.t2) return 2;
    if (d < p_.t3) return 3;
    return 4;
  }

  static int median_predict(int ra, int rb, int rc) {
    if (rc >= std::max(ra, rb)) return std::min(ra, rb);
    if (rc <= std::min(ra, rb)) return std::max(ra, rb);
    return ra + rb - rc;
  }

  int reduce(int e) const {
    if (e < 0) e += p_.range();
    if (e >= (p_.range() + 1) / 2) e -= p_.range();
    return e;
  }

  int reconstruct(int predicted, int e) const {
    int v = predicted + e;
    if (v < 0) v += p_.range();
    if (v > p_.maxval) v -= p_.range();
    return v;
  }

  // Regular-mode context selection shared by both directions.
  struct Regular {
    int ctx;
    int sign;
    int predicted;
    int k;
  };

  Regular regular_context(int ra, int rb, int rc, int rd) const {
    const int q = 81 * quantize_gradient(rd - rb) + 9 * quantize_gradient(rb - rc) + quantize_gradient(rc - ra);
    Regular r;
    r.sign = q < 0 ? -1 : 1;
    r.ctx = q < 0 ? -q : q;
    r.predicted = std::clamp(median_predict(ra, rb, rc) + r.sign * c_[r.ctx], 0, p_.maxval);
    int k = 0;
    while ((n_[r.ctx] << k) < a_[r.ctx] && k < 24) ++k;
    r.k = k;
    return r;
  }

  bool special_mapping(int ctx, int k) const { return k == 0 && 2 * b_[ctx] <= -n_[ctx]; }

  void update_regular(int ctx, int e) {
    b_[ctx] += e;
    a_[ctx] += std::abs(e);
    if (n_[ctx] == p_.reset) {
      a_[ctx] >>= 1;
      b_[ctx] >>= 1;
      n_[ctx] >>= 1;
    }
    ++n_[ctx];
    if (b_[ctx] <= -n_[ctx]) {
      b_[ctx] += n_[ctx];
      if (b_[ctx] <= -n_[ctx]) b_[ctx] = -n_[ctx] + 1;
      if (c_[ctx] > kMinC) --c_[ctx];
    } else if (b_[ctx] > 0) {
      b_[ctx] -= n_[ctx];
      if (b_[ctx] > 0) b_[ctx] = 0;
      if (c_[ctx] < kMaxC) ++c_[ctx];
    }
  }

  int ri_k(int type) const {
    const int temp = ri_a_[type] + (ri_n_[type] >> 1) * type;
    int nt = ri_n_[type], k = 0;
    while (nt < temp) {
      nt <<= 1;
      ++k;
    }
    return k;
  }

  bool ri_map(int type, int e, int k) const {
    const int nn = ri_nn_[type], n = ri_n_[type];
    if (k == 0 && e > 0 && 2 * nn < n) return true;
    if (e < 0 && 2 * nn >= n) return true;
    if (e < 0 && k != 0) return true;
    return false;
  }

  int ri_unmap(int type, int temp, int k) const {
    const bool map = temp & 1;
    const int mag = (temp + static_cast<int>(map)) / 2;
    return ((k != 0 || 2 * ri_nn_[type] >= ri_n_[type]) == map) ? -mag : mag;
  }

  void update_ri(int type, int e, int mapped) {
    if (e < 0) ++ri_nn_[type];
    ri_a_[type] += (mapped + 1 - type) >> 1;
    if (ri_n_[type] == p_.reset) {
      ri_a_[type] >>= 1;
      ri_n_[type] >>= 1;
      ri_nn_[type] >>= 1;
    }
    ++ri_n_[type];
  }

  int run_index = 0;
  void run_up() { run_index = std::min(31, run_index + 1); }
  void run_down() { run_index = std::max(0, run_index - 1); }

  const Params& params() const { return p_; }

 private:
  Params p_;
  std::array<int, kRegularContexts> a_{}, b_{}, c_{}, n_{};
  std::array<int, 2> ri_a_{}, ri_n_{}, ri_nn_{};
};

inline void put_golomb(BitWriter& bw, int mapped, int k, int limit, int qbpp) {
  const int high = mapped >> k;
  if (high < limit - qbpp - 1) {
    bw.put_zeros(high);
    bw.put_bit(1);
    bw.put_bits(static_cast<std::uint32_t>(mapped) & ((1u << k) - 1u), k);
  } else {
    bw.put_zeros(limit - qbpp - 1);
    bw.put_bit(1);
    bw.put_bits(static_cast<std::uint32_t>(mapped - 1) & ((1u << qbpp) - 1u), qbpp);
  }
}

inline int get_golomb(BitReader& br, int k, int limit, int qbpp) {
  int high = 0;
  while (br.get_bit() == 0) {
    if (++high > limit) throw FormatError(FormatErrc::kCorruptPayload, "Golomb code exceeds LIMIT", br.position());
  }
  if (high >= limit - (qbpp + 1)) return static_cast<int>(br.get_bits(qbpp)) + 1;
  if (k == 0) return high;
  return (high << k) + static_cast<int>(br.get_bits(k));
}

namespace detail {

// Two line buffers with one guard sample on each side. Sample x of a line
// lives at index x + 1.
struct Lines {
  explicit Lines(std::size_t width) : prev(width + 2, 0), cur(width + 2, 0), w(width) {}
  void start_line() {
    prev[w + 1] = prev[w];
    cur[0] = prev[1];
  }
  void end_line() { std::swap(prev, cur); }
  std::vector<int> prev, cur;
  std::size_t w;
};

inline void put_u16(std::vector<std::uint8_t>& out, std::size_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline void put_marker(std::vector<std::uint8_t>& out, std::uint8_t m) {
  out.push_back(0xFF);
  out.push_back(m);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Plane& plane) {
  if (plane.width == 0 || plane.height == 0 || plane.width > 65535 || plane.height > 65535) {
    throw DimensionError("JPEG-LS plane must be between 1x1 and 65535x65535, got " + std::to_string(plane.width) +
                         "x" + std::to_string(plane.height));
  }
  if (plane.samples.size() != plane.width * plane.height) throw DimensionError("plane sample count mismatch");
  const Params params = Params::defaults(255);
  std::vector<std::uint8_t> out;
  out.reserve(64 + plane.samples.size() / 2);
  detail::put_marker(out, kMarkerSoi);
  detail::put_marker(out, kMarkerSof55);
  detail::put_u16(out, 11);
  out.push_back(8);
  detail::put_u16(out, plane.height);
  detail::put_u16(out, plane.width);
  out.push_back(1);     // components
  out.push_back(1);     // component id
  out.push_back(0x11);  // sampling factors
  out.push_back(0);     // Tq
  detail::put_marker(out, kMarkerSos);
  detail::put_u16(out, 8);
  out.push_back(1);  // components in scan
  out.push_back(1);  // component id
  out.push_back(0);  // mapping table
  out.push_back(0);  // NEAR
  out.push_back(0);  // ILV
  out.push_back(0);  // point transform

  BitWriter bw(out);
  ScanState st(params);
  const int limit = params.limit(), qbpp = params.qbpp();
  const std::size_t W = plane.width;
  detail::Lines lines(W);
  for (std::size_t y = 0; y < plane.height; ++y) {
    const std::uint8_t* row = plane.samples.data() + y * W;
    lines.start_line();
    std::size_t x = 0;
    while (x < W) {
      const int ra = lines.cur[x], rb = lines.prev[x + 1], rc = lines.prev[x], rd = lines.prev[x + 2];
      if (rd == rb && rb == rc && rc == ra) {
        // Run mode.
        const std::size_t remaining = W - x;
        std::size_t run = 0;
        while (run < remaining && row[x + run] == ra) {
          lines.cur[x + run + 1] = ra;
          ++run;
        }
        const bool eol = run == remaining;
        std::size_t left = run;
        while (left >= (std::size_t{1} << kJ[st.run_index])) {
          bw.put_bit(1);
          left -= std::size_t{1} << kJ[st.run_index];
          st.run_up();
        }
        if (eol) {
          if (left != 0) bw.put_bit(1);
          x += run;
          continue;
        }
        bw.put_bits(static_cast<std::uint32_t>(left), kJ[st.run_index] + 1);
        const std::size_t xi = x + run;
        const int ix = row[xi];
        const int rb_i = lines.prev[xi + 1];
        const int type = ra == rb_i ? 1 : 0;
        const int e = type ? st.reduce(ix - ra) : st.reduce((ix - rb_i) * (rb_i > ra ? 1 : -1));
        const int k = st.ri_k(type);
        const int mapped = 2 * std::abs(e) - type - static_cast<int>(st.ri_map(type, e, k));
        put_golomb(bw, mapped, k, limit - kJ[st.run_index] - 1, qbpp);
        st.update_ri(type, e, mapped);
        st.run_down();
        lines.cur[xi + 1] = ix;
        x = xi + 1;
        continue;
      }
      const auto r = st.regular_context(ra, rb, rc, rd);
      const int ix = row[x];
      const int e = st.reduce(r.sign * (ix - r.predicted));
      int mapped;
      if (st.special_mapping(r.ctx, r.k)) {
        mapped = e >= 0 ? 2 * e + 1 : -2 * (e + 1);
      } else {
        mapped = e >= 0 ? 2 * e : -2 * e - 1;
      }
      put_golomb(bw, mapped, r.k, limit, qbpp);
      st.update_regular(r.ctx, e);
      lines.cur[x + 1] = ix;
      ++x;
    }
    lines.end_line();
  }
  bw.finish();
  detail::put_marker(out, kMarkerEoi);
  return out;
}

namespace detail {

struct Reader {
  std::span<const std::uint8_t> d;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > d.size()) throw FormatError(FormatErrc::kTruncated, "JPEG-LS header truncated", pos);
  }
  std::uint8_t u8() {
    need(1);
    return d[pos++];
  }
  std::size_t u16() {
    need(2);
    const std::size_t v = (std::size_t(d[pos]) << 8) | d[pos + 1];
    pos += 2;
    return v;
  }
  std::uint8_t marker() {
    const std::size_t at = pos;
    if (u8() != 0xFF) throw FormatError(FormatErrc::kCorruptPayload, "expected marker", at);
    std::uint8_t m = u8();
    while (m == 0xFF) m = u8();
    return m;
  }
};

}  // namespace detail

inline Plane decode(std::span<const std::uint8_t> bytes) {
  detail::Reader rd{bytes, 0};
  if (rd.marker() != kMarkerSoi) throw FormatError(FormatErrc::kBadMagic, "missing SOI", 0);
  std::size_t width = 0, height = 0;
  int precision = 0;
  bool have_frame = false;
  Params params;
  bool custom[5] = {false, false, false, false, false};
  Params preset;

  for (;;) {
    const std::size_t at = rd.pos;
    const std::uint8_t m = rd.marker();
    if (m == kMarkerSof55) {
      const std::size_t len = rd.u16();
      rd.need(len - 2);
      precision = rd.u8();
      height = rd.u16();
      width = rd.u16();
      const int comps = rd.u8();
      if (comps != 1) throw FormatError(FormatErrc::kCorruptPayload, "only single-component frames", at);
      if (len != 11) throw FormatError(FormatErrc::kCorruptPayload, "bad SOF55 length", at);
      rd.pos += 3;
      if (precision < 2 || precision > 8) {
        throw FormatError(FormatErrc::kCorruptPayload, "unsupported precision " + std::to_string(precision), at);
      }
      if (width == 0 || height == 0) throw FormatError(FormatErrc::kCorruptPayload, "zero frame size", at);
      have_frame = true;
    } else if (m == kMarkerLse) {
      const std::size_t len = rd.u16();
      rd.need(len - 2);
      const std::size_t end = rd.pos + len - 2;
      const int id = rd.u8();
      if (id != 1) throw FormatError(FormatErrc::kCorruptPayload, "unsupported LSE id " + std::to_string(id), at);
      const int vals[5] = {int(rd.u16()), int(rd.u16()), int(rd.u16()), int(rd.u16()), int(rd.u16())};
      preset.maxval = vals[0];
      preset.t1 = vals[1];
      preset.t2 = vals[2];
      preset.t3 = vals[3];
      preset.reset = vals[4];
      for (int i = 0; i < 5; ++i) custom[i] = vals[i] != 0;
      rd.pos = end;
    } else if (m == kMarkerSos) {
      if (!have_frame) throw FormatError(FormatErrc::kCorruptPayload, "SOS before frame header", at);
      const std::size_t len = rd.u16();
      rd.need(len - 2);
      const int ns = rd.u8();
      if (ns != 1 || len != 8) throw FormatError(FormatErrc::kCorruptPayload, "only single-component scans", at);
      rd.pos += 2;
      const int near = rd.u8();
      const int ilv = rd.u8();
      rd.u8();
      if (near != 0) throw FormatError(FormatErrc::kCorruptPayload, "near-lossless scans unsupported", at);
      if (ilv != 0) throw FormatError(FormatErrc::kCorruptPayload, "interleaved scans unsupported", at);
      break;
    } else if ((m >= 0xE0 && m <= 0xEF) || m == kMarkerCom) {
      const std::size_t len = rd.u16();
      rd.need(len - 2);
      rd.pos += len - 2;
    } else {
      throw FormatError(FormatErrc::kCorruptPayload, "unexpected marker 0xFF" + std::to_string(m), at);
    }
  }

  const int maxval = custom[0] ? preset.maxval : (1 << precision) - 1;
  params = Params::defaults(maxval);
  if (custom[1]) params.t1 = preset.t1;
  if (custom[2]) params.t2 = preset.t2;
  if (custom[3]) params.t3 = preset.t3;
  if (custom[4]) params.reset = preset.reset;

  Plane plane(width, height);
  BitReader br(bytes, rd.pos);
  ScanState st(params);
  const int limit = params.limit(), qbpp = params.qbpp();
  detail::Lines lines(width);
  for (std::size_t y = 0; y < height; ++y) {
    std::uint8_t* row = plane.samples.data() + y * width;
    lines.start_line();
    std::size_t x = 0;
    while (x < width) {
      const int ra = lines.cur[x], rb = lines.prev[x + 1], rc = lines.prev[x], rd_ = lines.prev[x + 2];
      if (rd_ == rb && rb == rc && rc == ra) {
        const std::size_t remaining = width - x;
        std::size_t run = 0;
        while (br.get_bit()) {
          const std::size_t step = std::size_t{1} << kJ[st.run_index];
          const std::size_t count = std::min(step, remaining - run);
          run += count;
          if (count == step) st.run_up();
          if (run == remaining) break;
        }
        if (run != remaining && kJ[st.run_index] > 0) run += br.get_bits(kJ[st.run_index]);
        if (run > remaining) throw FormatError(FormatErrc::kCorruptPayload, "run exceeds line", br.position());
        for (std::size_t i = 0; i < run; ++i) {
          lines.cur[x + i + 1] = ra;
          row[x + i] = static_cast<std::uint8_t>(ra);
        }
        if (run == remaining) {
          x += run;
          continue;
        }
        const std::size_t xi = x + run;
        const int rb_i = lines.prev[xi + 1];
        const int type = ra == rb_i ? 1 : 0;
        const int k = st.ri_k(type);
        const int mapped = get_golomb(br, k, limit - kJ[st.run_index] - 1, qbpp);
        const int e = st.ri_unmap(type, mapped + type, k);
        st.update_ri(type, e, mapped);
        st.run_down();
        const int v = type ? st.reconstruct(ra, e) : st.reconstruct(rb_i, e * (rb_i > ra ? 1 : -1));
        lines.cur[xi + 1] = v;
        row[xi] = static_cast<std::uint8_t>(v);
        x = xi + 1;
        continue;
      }
      const auto r = st.regular_context(ra, rb, rc, rd_);
      const int mapped = get_golomb(br, r.k, limit, qbpp);
      int e = (mapped & 1) ? -((mapped + 1) >> 1) : (mapped >> 1);
      if (st.special_mapping(r.ctx, r.k)) e = -e - 1;
      st.update_regular(r.ctx, e);
      const int v = st.reconstruct(r.predicted, r.sign * e);
      lines.cur[x + 1] = v;
      row[x] = static_cast<std::uint8_t>(v);
      ++x;
    }
    lines.end_line();
  }
  const std::size_t end = br.end_of_scan();
  if (end + 1 >= bytes.size() || bytes[end] != 0xFF || bytes[end + 1] != kMarkerEoi) {
    throw FormatError(FormatErrc::kCorruptPayload, "missing EOI after scan", end);
  }
  return plane;
}

// MED prediction residuals (reduced modulo 256) in raster order. Regular
// and run samples alike; used to study the latent residual distribution.
inline std::vector<int> prediction_residuals(const Plane& plane) {
  std::vector<int> out;
  out.reserve(plane.samples.size());
  ScanState st(Params::defaults(255));
  for (std::size_t y = 0; y < plane.height; ++y) {
    for (std::size_t x = 0; x < plane.width; ++x) {
      const int rb = y ? plane.at(x, y - 1) : 0;
      const int ra = x ? plane.at(x - 1, y) : rb;
      const int rc = (x && y) ? plane.at(x - 1, y - 1) : (y > 1 && !x ? plane.at(0, y - 2) : 0);
      out.push_back(st.reduce(int(plane.at(x, y)) - ScanState::median_predict(ra, rb, rc)));
    }
  }
  return out;
}

}  // namespace jpegls
}  // namespace frappe::entropy
