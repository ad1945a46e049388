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

#include <gtest/gtest.h>

#include "frappe/analysis.hpp"
#include "frappe/synthesis.hpp"

namespace frappe {
namespace {

LatentSet random_latents(const CodecConfig& cfg, std::size_t n, Shape extents, Rng& rng) {
  LatentSet l;
  l.config = cfg;
  l.transmitted = n;
  l.extents = extents;
  const auto k = cfg.populated(n);
  for (std::size_t s = 0; s < cfg.scales.size(); ++s) {
    ScaleLatents sl;
    sl.channels = k[s];
    for (auto e : extents) sl.grid.push_back(e / cfg.scales[s].patch);
    sl.values.resize(k[s] * sl.sites());
    for (auto& v : sl.values) v = static_cast<std::int8_t>(static_cast<int>(rng.below(255)) - 127);
    l.scales.push_back(sl);
  }
  return l;
}

TEST(Adapt, FrappeImageWidths) {
  const auto cfg = CodecConfig::frappe_image();
  Rng rng(1);
  for (std::size_t n : {1, 3, 9, 10, 21}) {
    const auto a = adapt(random_latents(cfg, n, {64, 64}, rng), cfg.decoder_patch);
    EXPECT_EQ(a.shape(), (Shape{decoder_input_width(cfg, n), 8, 8})) << n;
  }
}

TEST(Adapt, RebinsByFoldingOrRepeating) {
  const CodecConfig cfg{1, 2, {{1, 4}, {1, 1}}, 2};
  LatentSet l;
  l.config = cfg;
  l.transmitted = 2;
  l.extents = {4, 4};
  l.scales.push_back({1, {1, 1}, {127}});
  ScaleLatents fine{1, {4, 4}, {}};
  for (int i = 0; i < 16; ++i) fine.values.push_back(static_cast<std::int8_t>(i));
  l.scales.push_back(fine);
  const auto a = adapt(l, 2);
  ASSERT_EQ(a.shape(), (Shape{5, 2, 2}));
  // Coarse scale repeated over the 2x2 decoder grid, dequantized by 1/127.
  for (std::size_t s = 0; s < 4; ++s) EXPECT_FLOAT_EQ(a[s], 1.0f);
  // Fine scale folded: channel 1 + q holds block offset q = (u, v).
  EXPECT_FLOAT_EQ(a[(1 + 0) * 4 + 0], 0.0f / 127);
  EXPECT_FLOAT_EQ(a[(1 + 1) * 4 + 0], 1.0f / 127);
  EXPECT_FLOAT_EQ(a[(1 + 2) * 4 + 0], 4.0f / 127);
  EXPECT_FLOAT_EQ(a[(1 + 3) * 4 + 3], 15.0f / 127);
}

TEST(Decode, OutputShapeAndRange) {
  const auto cfg = CodecConfig::frappe_image();
  Rng rng(2);
  auto w = SynthesisWeights<float>::init(decoder_input_width(cfg, 21), 16, 2, 3, 8, 2, rng);
  for (auto& v : w.unpatch_kernel.value.values()) v *= 50.0f;
  const auto y = decode(random_latents(cfg, 21, {64, 32}, rng), w);
  EXPECT_EQ(y.shape(), (Shape{3, 64, 32}));
  bool saturated = false;
  for (float v : y.values()) {
    ASSERT_GE(v, -1.0f);
    ASSERT_LE(v, 1.0f);
    saturated = saturated || v == 1.0f || v == -1.0f;
  }
  EXPECT_TRUE(saturated);
}

TEST(Decode, WidthMismatchNamesTheSnapshot) {
  const auto cfg = CodecConfig::frappe_image();
  Rng rng(3);
  const auto w = SynthesisWeights<float>::init(decoder_input_width(cfg, 21), 8, 1, 3, 8, 2, rng);
  try {
    decode(random_latents(cfg, 3, {64, 64}, rng), w);
    FAIL();
  } catch (const SnapshotError& e) {
    EXPECT_NE(std::string(e.what()).find("n=3 snapshot"), std::string::npos) << e.what();
  }
}

TEST(Decode, FloatAndDoubleAgree) {
  const CodecConfig cfg{3, 2, {{1, 4}, {2, 2}}, 2};
  Rng rng(4);
  const auto wf = SynthesisWeights<float>::init(decoder_input_width(cfg, 3), 8, 2, 3, 2, 2, rng);
  const auto wd = wf.cast<double>();
  const auto lat = random_latents(cfg, 3, {8, 8}, rng);
  const auto a = adapt(lat, 2);
  const auto yf = synthesize(a, wf);
  Tape<double> tape;
  const auto yd = synthesize(tape.constant(a.cast<double>()), wd).value();
  for (std::size_t i = 0; i < yf.size(); ++i) EXPECT_NEAR(yf[i], yd[i], 1e-5);
}

TEST(Weights, InitLayoutAndCast) {
  Rng rng(5);
  const auto w = SynthesisWeights<float>::init(10, 6, 2, 3, 4, 2, rng);
  EXPECT_EQ(w.stem_kernel.value.shape(), (Shape{6, 10, 3, 3}));
  EXPECT_EQ(w.blocks[1].dw_kernel.value.shape(), (Shape{6, 1, 3, 3}));
  EXPECT_EQ(w.blocks[0].expand_kernel.value.shape(), (Shape{24, 6}));
  EXPECT_EQ(w.project_kernel.value.shape(), (Shape{48, 6}));
  EXPECT_EQ(w.unpatch_kernel.value.shape(), (Shape{48, 3, 4, 4}));
  EXPECT_FLOAT_EQ(w.blocks[0].layer_scale.value[0], 0.01f);
  EXPECT_FLOAT_EQ(w.blocks[0].ln_gamma.value[0], 1.0f);
  EXPECT_TRUE(w.cast<double>().cast<float>().same_values(w));
  EXPECT_EQ(w.parameters().size(), 2u + 2 * 9 + 4);
}

}  // namespace
}  // namespace frappe
