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

#include <filesystem>

#include "frappe/bitstream.hpp"
#include "frappe/model_store.hpp"

namespace frappe {
namespace {

ModelSnapshotSet random_set(const CodecConfig& cfg, std::vector<std::size_t> ns, Rng& rng) {
  ModelSnapshotSet set;
  set.config = cfg;
  set.encoder = EncoderWeights::random(cfg, rng);
  for (auto& v : set.encoder.sigma.values()) v = static_cast<float>(rng.uniform(0.1, 2.0));
  for (auto& v : set.encoder.multiplier.values()) v = static_cast<float>(rng.uniform(0.5, 1.0));
  for (std::size_t n : ns) {
    auto w = SynthesisWeights<float>::init(decoder_input_width(cfg, n), 4 + rng.below(8), 1 + rng.below(2),
                                           cfg.input_channels, cfg.decoder_patch, cfg.rank, rng);
    for (auto* p : w.parameters()) {
      for (auto& v : p->value.values()) v = static_cast<float>(rng.normal());
    }
    set.add_decoder(n, std::move(w));
  }
  return set;
}

void expect_same(const ModelSnapshotSet& a, const ModelSnapshotSet& b) {
  EXPECT_EQ(a.config.describe(), b.config.describe());
  EXPECT_EQ(a.encoder, b.encoder);
  ASSERT_EQ(a.available(), b.available());
  for (const auto& [n, w] : a.decoders) {
    const auto& v = b.decoders.at(n);
    EXPECT_TRUE(w.same_values(v)) << n;
    EXPECT_EQ(w.clamp_output, v.clamp_output);
    EXPECT_EQ(w.block_count(), v.block_count());
  }
}

TEST(ModelStore, EmptyDecoderMapRoundtrip) {
  Rng rng(1);
  const auto set = random_set(CodecConfig::frappe_image(), {}, rng);
  const auto bytes = serialize(set);
  expect_same(deserialize(bytes), set);
  EXPECT_TRUE(ModelReader(bytes).available().empty());
}

TEST(ModelStore, RandomSetsRoundtripBitExact) {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    CodecConfig cfg;
    cfg.input_channels = 1 + rng.below(3);
    cfg.rank = 1 + rng.below(2);
    cfg.scales = {{1 + rng.below(3), 4}, {1 + rng.below(3), 2}};
    cfg.decoder_patch = 2;
    std::vector<std::size_t> ns;
    for (std::size_t n = 1; n <= cfg.total_channels(); ++n) {
      if (rng.below(2)) ns.push_back(n);
    }
    const auto set = random_set(cfg, ns, rng);
    const auto bytes = serialize(set);
    const auto back = deserialize(bytes);
    expect_same(back, set);
    ASSERT_EQ(serialize(back), bytes);
  }
}

TEST(ModelStore, FileRoundtrip) {
  Rng rng(3);
  const auto set = random_set(CodecConfig::frappe_image(), {3, 10, 21}, rng);
  const auto path = std::filesystem::temp_directory_path() / "frappe_model_store_test.frpm";
  save(path, set);
  expect_same(load(path), set);
  std::filesystem::remove(path);
}

TEST(ModelStore, TamperedByteFailsChecksum) {
  Rng rng(4);
  const auto bytes = serialize(random_set(CodecConfig{1, 2, {{1, 4}, {2, 2}}, 2}, {1, 3}, rng));
  for (std::size_t at : {std::size_t{5}, bytes.size() / 2, bytes.size() - 5, bytes.size() - 1}) {
    auto bad = bytes;
    bad[at] ^= 0x10;
    try {
      deserialize(bad);
      FAIL() << at;
    } catch (const FormatError& e) {
      EXPECT_EQ(e.code(), FormatErrc::kChecksum) << at;
    }
  }
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize(bad), FormatError);
}

TEST(ModelStore, ShapeInconsistencyIsReported) {
  Rng rng(5);
  auto set = random_set(CodecConfig{1, 2, {{1, 4}, {2, 2}}, 2}, {2}, rng);
  // Snapshot declared for n=2 but built for n=3's width.
  auto w = SynthesisWeights<float>::init(decoder_input_width(set.config, 3), 4, 1, 1, 2, 2, rng);
  set.add_decoder(2, w);
  EXPECT_THROW(serialize(set), SnapshotError);
}

TEST(ModelStore, EncoderChangeAfterSnapshotIsRejected) {
  Rng rng(6);
  auto set = random_set(CodecConfig{1, 2, {{1, 4}, {2, 2}}, 2}, {1, 2}, rng);
  set.encoder.kernels[1][0] += 1.0f;
  try {
    serialize(set);
    FAIL();
  } catch (const SnapshotError& e) {
    EXPECT_NE(std::string(e.what()).find("different encoder"), std::string::npos) << e.what();
  }
}

TEST(SelectDecoder, PresentAndAbsent) {
  Rng rng(7);
  const auto set = random_set(CodecConfig::frappe_image(), {3, 10, 21}, rng);
  EXPECT_TRUE(select_decoder(set, 10).same_values(set.decoders.at(10)));
  EXPECT_EQ(select_decoder(set, 21).input_width, 84u);
  try {
    select_decoder(set, 7);
    FAIL();
  } catch (const SnapshotError& e) {
    EXPECT_NE(std::string(e.what()).find("{3, 10, 21}"), std::string::npos) << e.what();
  }
  const ModelReader reader(serialize(set));
  EXPECT_THROW(reader.decoder(7), SnapshotError);
  EXPECT_TRUE(reader.decoder(3).same_values(set.decoders.at(3)));
}

TEST(SelectDecoder, LoadedSnapshotDecodesTruncatedStream) {
  const auto cfg = CodecConfig::frappe_image();
  Rng rng(8);
  const auto reader = ModelReader(serialize(random_set(cfg, {3, 10, 21}, rng)));
  Tensor<float> x(Shape{3, 64, 64});
  for (auto& v : x.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const auto full = pack(encode_latents(x, reader.encoder(), cfg, 21));
  for (std::size_t n : {3, 10, 21}) {
    const auto lat = unpack(truncate(full, n));
    const auto y = decode(lat, reader.decoder(n));
    EXPECT_EQ(y.shape(), x.shape()) << n;
  }
}

TEST(Inspect, IndexListsEveryArray) {
  Rng rng(9);
  const auto set = random_set(CodecConfig{1, 2, {{1, 4}, {2, 2}}, 2}, {1, 3}, rng);
  const ModelReader reader(serialize(set));
  const auto text = describe_index(reader);
  EXPECT_NE(text.find("snapshots=1,3"), std::string::npos) << text;
  EXPECT_NE(text.find("decoder.3.stem.kernel f32"), std::string::npos) << text;
  EXPECT_NE(text.find("encoder.sigma f32 (3)"), std::string::npos) << text;
}

}  // namespace
}  // namespace frappe
