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

#include "frappe/numerics/tape.hpp"
#include "frappe/synthesis.hpp"
#include "gradcheck.hpp"

namespace frappe {
namespace {

using gradcheck::random_input;
using gradcheck::weighted_sum;

constexpr int kSeeds = 100;

template <class Build, class Inputs>
void sweep(const char* name, Build build, Inputs make_inputs) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(1000 + seed);
    const auto rep = gradcheck::check(build, make_inputs(rng));
    ASSERT_TRUE(rep.ok()) << name << " seed " << seed << " rel " << rep.max_rel << " at " << rep.where;
  }
}

TEST(GradCheck, ConvStrided) {
  sweep(
      "conv_strided",
      [](auto&, auto& v) { return weighted_sum(ad::conv_strided(v[0], v[1], v[2], 2)); },
      [](Rng& r) {
        return std::vector{random_input({2, 4, 4}, r), random_input({3, 2, 2, 2}, r), random_input({3}, r)};
      });
}

TEST(GradCheck, ConvTransposed) {
  sweep(
      "conv_transposed",
      [](auto&, auto& v) { return weighted_sum(ad::conv_transposed(v[0], v[1], v[2], 2)); },
      [](Rng& r) {
        return std::vector{random_input({3, 2, 2}, r), random_input({3, 2, 2, 2}, r), random_input({2}, r)};
      });
}

TEST(GradCheck, Conv3) {
  sweep(
      "conv3", [](auto&, auto& v) { return weighted_sum(ad::conv3(v[0], v[1], v[2])); },
      [](Rng& r) {
        return std::vector{random_input({2, 4, 4}, r), random_input({2, 2, 3, 3}, r), random_input({2}, r)};
      });
}

TEST(GradCheck, Depthwise3) {
  sweep(
      "depthwise3", [](auto&, auto& v) { return weighted_sum(ad::depthwise3(v[0], v[1], v[2])); },
      [](Rng& r) {
        return std::vector{random_input({3, 4, 4}, r), random_input({3, 1, 3, 3}, r), random_input({3}, r)};
      });
}

TEST(GradCheck, Pointwise) {
  sweep(
      "pointwise", [](auto&, auto& v) { return weighted_sum(ad::pointwise(v[0], v[1], v[2])); },
      [](Rng& r) { return std::vector{random_input({3, 4, 4}, r), random_input({5, 3}, r), random_input({5}, r)}; });
}

TEST(GradCheck, LayerNorm) {
  sweep(
      "layer_norm", [](auto&, auto& v) { return weighted_sum(ad::layer_norm(v[0], v[1], v[2])); },
      [](Rng& r) {
        return std::vector{random_input({4, 4, 4}, r), random_input({4}, r, 0.5, 1.5), random_input({4}, r)};
      });
}

TEST(GradCheck, Gelu) {
  sweep(
      "gelu", [](auto&, auto& v) { return weighted_sum(ad::gelu(v[0])); },
      [](Rng& r) { return std::vector{random_input({1, 4, 4}, r, -3.0, 3.0)}; });
}

TEST(GradCheck, Hardtanh) {
  sweep(
      "hardtanh", [](auto&, auto& v) { return weighted_sum(ad::hardtanh(v[0])); },
      [](Rng& r) { return std::vector{random_input({1, 4, 4}, r, -2.0, 2.0)}; });
}

TEST(GradCheck, Compander) {
  sweep(
      "compand", [](auto&, auto& v) { return weighted_sum(ad::compand(v[0], v[1])); },
      [](Rng& r) { return std::vector{random_input({2, 4, 4}, r, -3.0, 3.0), random_input({2}, r, 0.2, 2.0)}; });
}

TEST(GradCheck, ChannelScale) {
  sweep(
      "channel_scale", [](auto&, auto& v) { return weighted_sum(ad::channel_scale(v[0], v[1])); },
      [](Rng& r) { return std::vector{random_input({2, 4, 4}, r), random_input({2}, r)}; });
}

TEST(GradCheck, Arithmetic) {
  sweep(
      "add/sub/mul/scale/square",
      [](auto&, auto& v) {
        auto y = ad::mul(ad::add(v[0], v[1]), ad::sub(v[0], ad::scale(v[1], 0.5)));
        return weighted_sum(ad::square(y));
      },
      [](Rng& r) { return std::vector{random_input({1, 4, 4}, r), random_input({1, 4, 4}, r)}; });
}

TEST(GradCheck, Reductions) {
  sweep(
      "mean/variance",
      [](auto&, auto& v) { return ad::add(ad::mean(v[0]), ad::scale(ad::variance(v[0]), 3.0)); },
      [](Rng& r) { return std::vector{random_input({1, 4, 4}, r)}; });
  sweep(
      "stddev/log", [](auto&, auto& v) { return ad::log_floor(ad::stddev(v[0], 1e-6), 2.0, 1e-12); },
      [](Rng& r) { return std::vector{random_input({1, 4, 4}, r)}; });
}

TEST(GradCheck, Rebinning) {
  sweep(
      "space_to_depth", [](auto&, auto& v) { return weighted_sum(ad::space_to_depth(v[0], 2)); },
      [](Rng& r) { return std::vector{random_input({2, 4, 4}, r)}; });
  sweep(
      "upsample_nearest", [](auto&, auto& v) { return weighted_sum(ad::upsample_nearest(v[0], 2)); },
      [](Rng& r) { return std::vector{random_input({2, 2, 2}, r)}; });
  sweep(
      "concat_channels",
      [](auto&, auto& v) { return weighted_sum(ad::concat_channels(std::vector{v[0], v[1]})); },
      [](Rng& r) { return std::vector{random_input({1, 4, 4}, r), random_input({2, 4, 4}, r)}; });
}

// The whole decoder with every weight as a differentiated input.
TEST(GradCheck, SynthesisTransform) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(5000 + seed);
    auto w = SynthesisWeights<double>::init(4, 4, 1, 1, 2, 2, rng);
    w.clamp_output = false;
    // Non-default values so LayerNorm, LayerScale, and biases all matter.
    for (auto* p : w.parameters()) {
      for (auto& v : p->value.values()) v = static_cast<float>(v + rng.uniform(-0.3, 0.3));
    }
    std::vector<Tensor<double>> inputs{random_input({4, 2, 2}, rng)};
    for (auto* p : w.parameters()) inputs.push_back(p->value);
    const auto build = [&](auto& tape, auto& v) {
      using T = typename std::decay_t<decltype(tape)>::value_type;
      auto wt = w.template cast<T>();
      std::size_t next = 1;
      auto out = detail::synthesis_graph(v[0], wt, [&](Parameter<T>&) { return v[next++]; });
      return weighted_sum(out);
    };
    const auto rep = gradcheck::check(build, inputs);
    ASSERT_TRUE(rep.ok()) << "seed " << seed << " rel " << rep.max_rel << " at " << rep.where;
  }
}

TEST(Tape, FrozenParametersGetNoGradient) {
  Tape<float> tape;
  Parameter<float> a("a", Tensor<float>(Shape{2}, 1.5f));
  Parameter<float> b("b", Tensor<float>(Shape{2}, -0.5f));
  b.frozen = true;
  auto y = ad::sum(ad::mul(tape.parameter(a), tape.parameter(b)));
  tape.backward(y);
  ASSERT_FALSE(a.grad.empty());
  EXPECT_FLOAT_EQ(a.grad[0], -0.5f);
  EXPECT_TRUE(b.grad.empty());
  EXPECT_TRUE(tape.frozen_leaves_clean());
}

TEST(Tape, DetachBlocksGradient) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>(Shape{1}, 3.0));
  auto y = ad::mul(x, ad::detach(x));
  tape.backward(y);
  EXPECT_DOUBLE_EQ((*tape.grad(x))[0], 3.0);
}

TEST(Tape, RejectsNonScalarLossAndForeignVars) {
  Tape<float> t1, t2;
  auto a = t1.variable(Tensor<float>(Shape{2}));
  auto b = t2.variable(Tensor<float>(Shape{2}));
  EXPECT_THROW(t1.backward(a), InternalError);
  EXPECT_THROW(ad::add(a, b), InternalError);
}

TEST(Tape, FlooredLogHasZeroGradient) {
  Tape<double> tape;
  auto x = tape.variable(Tensor<double>::scalar(0.0));
  auto y = ad::log_floor(x, 10.0, 1e-12);
  EXPECT_DOUBLE_EQ(y.value().item(), -12.0);
  tape.backward(y);
  const auto* g = tape.grad(x);
  EXPECT_TRUE(g == nullptr || (*g)[0] == 0.0);
}

}  // namespace
}  // namespace frappe
