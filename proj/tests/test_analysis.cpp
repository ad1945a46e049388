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

#include <cmath>

#include "frappe/analysis.hpp"

namespace frappe {
namespace {

Tensor<float> random_image(Shape shape, Rng& rng) {
  Tensor<float> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

TEST(Config, FrappeImageLayout) {
  const auto c = CodecConfig::frappe_image();
  EXPECT_EQ(c.total_channels(), 21u);
  EXPECT_EQ(c.max_patch(), 32u);
  EXPECT_EQ(c.locate(0).scale, 0u);
  EXPECT_EQ(c.locate(3).scale, 1u);
  EXPECT_EQ(c.locate(20).scale, 4u);
  EXPECT_EQ(c.locate(20).index, 2u);
  EXPECT_EQ(c.populated(10), (std::vector<std::size_t>{3, 6, 1, 0, 0}));
  EXPECT_THROW(c.populated(0), ParameterError);
  EXPECT_THROW(c.populated(22), ParameterError);
}

TEST(Config, ValidationRejectsBadGeometry) {
  CodecConfig c = CodecConfig::frappe_image();
  c.scales[1].patch = 12;
  EXPECT_THROW(c.validate(), ParameterError);
  c = CodecConfig::frappe_image();
  c.rank = 0;
  EXPECT_THROW(c.validate(), ParameterError);
}

TEST(Config, ExtentErrorNamesTheRequiredMultiple) {
  const auto c = CodecConfig::frappe_image();
  try {
    c.check_extents({500, 512});
    FAIL();
  } catch (const DimensionError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("multiples of 32"), std::string::npos) << m;
    EXPECT_NE(m.find("500"), std::string::npos) << m;
  }
}

TEST(Cost, FrappeImageOpsPerPixel) {
  const auto cost = analysis_cost(CodecConfig::frappe_image());
  EXPECT_NEAR(cost.total(), 67.79, 0.01);
  EXPECT_DOUBLE_EQ(cost.projection_macs, 63.0);
  ASSERT_EQ(cost.compand_per_scale.size(), 5u);
  EXPECT_DOUBLE_EQ(cost.compand_per_scale.back(), 3.0);
  // Closed form of the compander term: 4 * (3/1024 + 6/256 + 3/64 + 6/16 + 3/4).
  EXPECT_DOUBLE_EQ(cost.compand_total(), 4.0 * (3.0 / 1024 + 6.0 / 256 + 3.0 / 64 + 6.0 / 16 + 3.0 / 4));
}

TEST(Cost, DecoderInputWidth) {
  const auto c = CodecConfig::frappe_image();
  EXPECT_EQ(decoder_input_width(c, 21), 84u);
  EXPECT_EQ(decoder_input_width(c, 3), 3u);
  EXPECT_EQ(decoder_input_width(c, 9), 9u);
  EXPECT_EQ(decoder_input_width(c, 10), 10u);
  EXPECT_EQ(decoder_input_width(c, 13), 12u + 4u);
  EXPECT_EQ(decoder_input_width(c, 18), 12u + 24u);
}

TEST(Compander, BoundHoldsAcrossSigma) {
  Rng rng(17);
  std::size_t violations = 0;
  for (int i = 0; i < 200000; ++i) {
    const double sigma = std::pow(10.0, rng.uniform(-6.0, 6.0));
    const double u = (rng.uniform() < 0.5 ? -1 : 1) * std::pow(10.0, rng.uniform(-12.0, 12.0));
    if (!(std::abs(compand(u, sigma)) < 127.0)) ++violations;
  }
  EXPECT_EQ(violations, 0u);
  for (double s : {1e-6, 0.5, 1.0, 3.0, 1e6}) EXPECT_EQ(compand(s, s), 63.5);
  for (int i = 0; i < 1000; ++i) {
    const double s = std::pow(10.0, rng.uniform(-6.0, 6.0));
    ASSERT_EQ(compand(s, s), 63.5) << s;
    ASSERT_EQ(compand(-s, s), -63.5) << s;
  }
  EXPECT_THROW(compand(1.0, 0.0), ParameterError);
  EXPECT_THROW(compand(1.0, -1.0), ParameterError);
}

TEST(Quantize, RoundsHalfAwayFromZeroAndClamps) {
  EXPECT_EQ(quantize_latent(0.5), 1);
  EXPECT_EQ(quantize_latent(-0.5), -1);
  EXPECT_EQ(quantize_latent(2.5), 3);
  EXPECT_EQ(quantize_latent(-2.4), -2);
  EXPECT_EQ(quantize_latent(126.7), 127);
  EXPECT_EQ(quantize_latent(300.0), 127);
  EXPECT_EQ(quantize_latent(-300.0), -127);
}

// Direct per-channel evaluation, written without the patch index tables.
std::vector<std::int8_t> oracle_channel(const Tensor<float>& x, const EncoderWeights& w, const CodecConfig& cfg,
                                        std::size_t m) {
  const auto slot = cfg.locate(m);
  const std::size_t p = cfg.scales[slot.scale].patch;
  const std::size_t H = x.shape()[1], W = x.shape()[2], C = x.shape()[0];
  std::vector<std::int8_t> out;
  for (std::size_t i = 0; i < H / p; ++i) {
    for (std::size_t j = 0; j < W / p; ++j) {
      double acc = w.biases[slot.scale][slot.index];
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t u = 0; u < p; ++u) {
          for (std::size_t v = 0; v < p; ++v) {
            const double k = w.kernels[slot.scale][((slot.index * C + c) * p + u) * p + v];
            acc += k * x[(c * H + i * p + u) * W + j * p + v];
          }
        }
      }
      const double z = w.multiplier[m] * 127.0 * acc / (w.sigma[m] + std::abs(acc));
      out.push_back(static_cast<std::int8_t>(std::clamp(std::round(z), -127.0, 127.0)));
    }
  }
  return out;
}

EncoderWeights lively_weights(const CodecConfig& cfg, Rng& rng) {
  auto w = EncoderWeights::random(cfg, rng);
  for (std::size_t s = 0; s < cfg.scales.size(); ++s) {
    for (auto& b : w.biases[s].values()) b = static_cast<float>(rng.uniform(-0.2, 0.2));
  }
  for (std::size_t m = 0; m < cfg.total_channels(); ++m) {
    w.sigma[m] = static_cast<float>(rng.uniform(0.05, 2.0));
    w.multiplier[m] = static_cast<float>(rng.uniform(0.3, 1.0));
  }
  return w;
}

TEST(Encode, MatchesDirectEvaluation) {
  const auto cfg = CodecConfig::frappe_image();
  Rng rng(3);
  const auto w = lively_weights(cfg, rng);
  const auto x = random_image({3, 64, 96}, rng);
  const auto lat = encode_latents(x, w, cfg, 21);
  for (std::size_t m = 0; m < 21; ++m) {
    const auto slot = cfg.locate(m);
    const auto& sl = lat.scales[slot.scale];
    const std::size_t n = sl.sites();
    const std::vector<std::int8_t> got(sl.values.begin() + static_cast<long>(slot.index * n),
                                       sl.values.begin() + static_cast<long>((slot.index + 1) * n));
    ASSERT_EQ(got, oracle_channel(x, w, cfg, m)) << "channel " << m;
  }
}

TEST(Encode, PrefixPropertyAndThreading) {
  const auto cfg = CodecConfig::frappe_image();
  Rng rng(4);
  const auto w = lively_weights(cfg, rng);
  const auto x = random_image({3, 64, 64}, rng);
  const auto full = encode_latents(x, w, cfg, 21);
  EXPECT_EQ(encode_latents(x, w, cfg, 21, 4), full);
  for (std::size_t n = 1; n <= 21; ++n) {
    ASSERT_EQ(encode_latents(x, w, cfg, n), full.truncated(n)) << n;
  }
  EXPECT_EQ(full.scales[4].grid, (Shape{32, 32}));
  EXPECT_EQ(full.scales[0].grid, (Shape{2, 2}));
}

TEST(Encode, RejectsBadInputs) {
  const auto cfg = CodecConfig::frappe_image();
  Rng rng(5);
  auto w = EncoderWeights::random(cfg, rng);
  EXPECT_THROW(encode_latents(random_image({3, 48, 64}, rng), w, cfg, 3), DimensionError);
  EXPECT_THROW(encode_latents(random_image({1, 64, 64}, rng), w, cfg, 3), DimensionError);
  w.sigma[2] = 0.0f;
  EXPECT_THROW(encode_latents(random_image({3, 64, 64}, rng), w, cfg, 3), ParameterError);
}

TEST(Encode, NoisySurrogateStaysWithinHalfStep) {
  const CodecConfig cfg{1, 2, {{1, 4}, {2, 2}}, 2};
  Rng rng(6);
  const auto w = lively_weights(cfg, rng);
  const auto x = random_image({1, 8, 8}, rng);
  Rng noise(7);
  const auto noisy = encode_latents_noisy(x, w, cfg, 3, noise);
  const auto hard = encode_latents(x, w, cfg, 3);
  ASSERT_EQ(noisy.size(), 2u);
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t i = 0; i < noisy[s].size(); ++i) {
      // The noisy value and the rounded one are both within 0.5 of the same activation.
      EXPECT_LE(std::abs(noisy[s][i] - hard.scales[s].values[i]), 1.0 + 1e-4);
    }
  }
}

TEST(Encode, OneDimensionalAndVolumetricRanks) {
  Rng rng(8);
  const CodecConfig c1{2, 1, {{2, 8}, {1, 2}}, 4};
  const auto l1 = encode_latents(random_image({2, 32}, rng), EncoderWeights::random(c1, rng), c1, 3);
  EXPECT_EQ(l1.scales[0].grid, (Shape{4}));
  const CodecConfig c3{1, 3, {{1, 4}, {2, 2}}, 2};
  const auto l3 = encode_latents(random_image({1, 8, 8, 4}, rng), EncoderWeights::random(c3, rng), c3, 3);
  EXPECT_EQ(l3.scales[1].grid, (Shape{4, 4, 2}));
  EXPECT_EQ(decoder_input_width(c3, 3), 1u + 2u);
  EXPECT_EQ(decoder_input_width(c1, 3), 2u + 2u);
}

}  // namespace
}  // namespace frappe
