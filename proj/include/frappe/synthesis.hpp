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

// Synthesis transform: rebin every scale group to the decoder grid, then a
// kernel-3 stem, ConvNeXt-style residual blocks, a pointwise projection to
// C * p_d^D channels, a stride-p_d transposed convolution and Hardtanh.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "frappe/analysis.hpp"
#include "frappe/config.hpp"
#include "frappe/error.hpp"
#include "frappe/numerics/ops.hpp"
#include "frappe/numerics/random.hpp"
#include "frappe/numerics/tape.hpp"

namespace frappe {

// Integer latents are divided by this before rebinning. Part of the stream
// format: encoder and decoder must agree on it.
inline constexpr double kDequantScale = 1.0 / 127.0;
inline constexpr double kLayerScaleInit = 1e-2;

// Rebin one scale group's grid [k, T/p_s...] to [k', T/p_d...].
template <class T>
Tensor<T> adapt_scale(const Tensor<T>& grid, std::size_t patch, std::size_t decoder_patch) {
  if (patch < decoder_patch) return ops::space_to_depth(grid, decoder_patch / patch);
  if (patch > decoder_patch) return ops::upsample_nearest(grid, patch / decoder_patch);
  return grid;
}

template <class T>
Var<T> adapt_scale(Var<T> grid, std::size_t patch, std::size_t decoder_patch) {
  if (patch < decoder_patch) return ad::space_to_depth(grid, decoder_patch / patch);
  if (patch > decoder_patch) return ad::upsample_nearest(grid, patch / decoder_patch);
  return grid;
}

// Dequantized grid of one populated scale, [k, grid...].
inline Tensor<float> dequantize(const ScaleLatents& latents) {
  Shape shape{latents.channels};
  shape.insert(shape.end(), latents.grid.begin(), latents.grid.end());
  std::vector<float> v(latents.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(latents.values[i] * kDequantScale);
  return Tensor<float>(shape, std::move(v));
}

// Concatenated decoder input, [C_d, T/p_d...], in channel order.
inline Tensor<float> adapt(const LatentSet& latents, std::size_t decoder_patch) {
  std::vector<Tensor<float>> parts;
  for (std::size_t s = 0; s < latents.scales.size(); ++s) {
    if (latents.scales[s].channels == 0) continue;
    parts.push_back(adapt_scale(dequantize(latents.scales[s]), latents.config.scales[s].patch, decoder_patch));
  }
  std::vector<const Tensor<float>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  return ops::concat_channels<float>(ptrs);
}

template <class T>
struct SynthesisBlock {
  Parameter<T> dw_kernel, dw_bias;
  Parameter<T> ln_gamma, ln_beta;
  Parameter<T> expand_kernel, expand_bias;
  Parameter<T> contract_kernel, contract_bias;
  Parameter<T> layer_scale;
};

template <class T>
struct SynthesisWeights {
  std::size_t input_width = 0;  // C_d
  std::size_t width = 0;
  std::size_t output_channels = 0;  // C
  std::size_t decoder_patch = 1;
  std::size_t rank = 2;
  // The merged decoder clamps with Hardtanh; residual predictors do not.
  bool clamp_output = true;

  Parameter<T> stem_kernel, stem_bias;
  std::vector<SynthesisBlock<T>> blocks;
  Parameter<T> project_kernel, project_bias;
  Parameter<T> unpatch_kernel, unpatch_bias;

  std::size_t block_count() const { return blocks.size(); }
  std::size_t projected_channels() const { return output_channels * int_pow(decoder_patch, rank); }

  static SynthesisWeights init(std::size_t input_width, std::size_t width, std::size_t block_count,
                               std::size_t output_channels, std::size_t decoder_patch, std::size_t rank, Rng& rng) {
    if (input_width == 0 || width == 0 || output_channels == 0 || rank < 1 || rank > 3 ||
        !is_power_of_two(decoder_patch)) {
      throw ParameterError("invalid synthesis geometry");
    }
    SynthesisWeights w;
    w.input_width = input_width;
    w.width = width;
    w.output_channels = output_channels;
    w.decoder_patch = decoder_patch;
    w.rank = rank;
    const std::size_t taps = int_pow(3, rank);
    const std::size_t P = int_pow(decoder_patch, rank);
    auto uniform = [&](Shape shape, double fan_in) {
      Tensor<T> t(std::move(shape));
      const double bound = 1.0 / std::sqrt(fan_in);
      for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
      return t;
    };
    auto spatial = [&](Shape lead, std::size_t e) {
      for (std::size_t d = 0; d < rank; ++d) lead.push_back(e);
      return lead;
    };
    w.stem_kernel = {"stem.kernel", uniform(spatial({width, input_width}, 3), double(input_width * taps))};
    w.stem_bias = {"stem.bias", Tensor<T>(Shape{width})};
    for (std::size_t b = 0; b < block_count; ++b) {
      SynthesisBlock<T> blk;
      const std::string pre = "block" + std::to_string(b) + ".";
      blk.dw_kernel = {pre + "dw.kernel", uniform(spatial({width, 1}, 3), double(taps))};
      blk.dw_bias = {pre + "dw.bias", Tensor<T>(Shape{width})};
      blk.ln_gamma = {pre + "ln.gamma", Tensor<T>(Shape{width}, T(1))};
      blk.ln_beta = {pre + "ln.beta", Tensor<T>(Shape{width})};
      blk.expand_kernel = {pre + "expand.kernel", uniform(Shape{4 * width, width}, double(width))};
      blk.expand_bias = {pre + "expand.bias", Tensor<T>(Shape{4 * width})};
      blk.contract_kernel = {pre + "contract.kernel", uniform(Shape{width, 4 * width}, double(4 * width))};
      blk.contract_bias = {pre + "contract.bias", Tensor<T>(Shape{width})};
      blk.layer_scale = {pre + "layer_scale", Tensor<T>(Shape{width}, static_cast<T>(kLayerScaleInit))};
      w.blocks.push_back(std::move(blk));
    }
    w.project_kernel = {"project.kernel", uniform(Shape{output_channels * P, width}, double(width))};
    w.project_bias = {"project.bias", Tensor<T>(Shape{output_channels * P})};
    w.unpatch_kernel = {"unpatch.kernel",
                        uniform(spatial({output_channels * P, output_channels}, decoder_patch), double(output_channels * P))};
    w.unpatch_bias = {"unpatch.bias", Tensor<T>(Shape{output_channels})};
    return w;
  }

  // Every array in a fixed order (serialization and optimizers rely on it).
  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out{&stem_kernel, &stem_bias};
    for (auto& b : blocks) {
      for (auto* p : {&b.dw_kernel, &b.dw_bias, &b.ln_gamma, &b.ln_beta, &b.expand_kernel, &b.expand_bias,
                      &b.contract_kernel, &b.contract_bias, &b.layer_scale}) {
        out.push_back(p);
      }
    }
    for (auto* p : {&project_kernel, &project_bias, &unpatch_kernel, &unpatch_bias}) out.push_back(p);
    return out;
  }
  std::vector<const Parameter<T>*> parameters() const {
    auto ps = const_cast<SynthesisWeights*>(this)->parameters();
    return {ps.begin(), ps.end()};
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->value.size();
    return n;
  }

  template <class U>
  SynthesisWeights<U> cast() const {
    SynthesisWeights<U> out;
    out.input_width = input_width;
    out.width = width;
    out.output_channels = output_channels;
    out.decoder_patch = decoder_patch;
    out.rank = rank;
    out.clamp_output = clamp_output;
    out.blocks.resize(blocks.size());
    auto src = parameters();
    auto dst = out.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i]->name = src[i]->name;
      dst[i]->value = src[i]->value.template cast<U>();
      dst[i]->lr_scale = src[i]->lr_scale;
      dst[i]->frozen = src[i]->frozen;
    }
    return out;
  }

  bool same_values(const SynthesisWeights& other) const {
    auto a = parameters();
    auto b = other.parameters();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!(a[i]->value == b[i]->value)) return false;
    }
    return input_width == other.input_width && width == other.width && clamp_output == other.clamp_output;
  }
};

namespace detail {

template <class T, class W, class Leaf>
Var<T> synthesis_graph(Var<T> adapted, W& w, Leaf leaf) {
  if (adapted.value().channels() != w.input_width) {
    throw SnapshotError("decoder expects " + std::to_string(w.input_width) + " input channels, got " +
                        std::to_string(adapted.value().channels()));
  }
  // Leaves are created in parameters() order; argument evaluation order
  // is unspecified, so each one gets its own statement.
  auto pair = [&](auto& k, auto& b) {
    Var<T> kv = leaf(k);
    Var<T> bv = leaf(b);
    return std::pair{kv, bv};
  };
  auto [sk, sb] = pair(w.stem_kernel, w.stem_bias);
  Var<T> h = ad::conv3(adapted, sk, sb);
  for (auto& b : w.blocks) {
    auto [dk, db] = pair(b.dw_kernel, b.dw_bias);
    auto [lg, lb] = pair(b.ln_gamma, b.ln_beta);
    auto [ek, eb] = pair(b.expand_kernel, b.expand_bias);
    auto [ck, cb] = pair(b.contract_kernel, b.contract_bias);
    Var<T> ls = leaf(b.layer_scale);
    Var<T> y = ad::depthwise3(h, dk, db);
    y = ad::layer_norm(y, lg, lb);
    y = ad::pointwise(y, ek, eb);
    y = ad::gelu(y);
    y = ad::pointwise(y, ck, cb);
    y = ad::channel_scale(y, ls);
    h = ad::add(h, y);
  }
  auto [pk, pb] = pair(w.project_kernel, w.project_bias);
  auto [uk, ub] = pair(w.unpatch_kernel, w.unpatch_bias);
  h = ad::pointwise(h, pk, pb);
  h = ad::conv_transposed(h, uk, ub, w.decoder_patch);
  if (w.clamp_output) h = ad::hardtanh(h);
  return h;
}

}  // namespace detail

// Decoder graph with differentiable parameter leaves (frozen ones excepted).
template <class T>
Var<T> synthesize(Var<T> adapted, SynthesisWeights<T>& w) {
  Tape<T>& tape = *adapted.tape;
  return detail::synthesis_graph(adapted, w, [&](Parameter<T>& p) { return tape.parameter(p); });
}

// Decoder graph with constant weights.
template <class T>
Var<T> synthesize(Var<T> adapted, const SynthesisWeights<T>& w) {
  Tape<T>& tape = *adapted.tape;
  return detail::synthesis_graph(adapted, w, [&](const Parameter<T>& p) { return tape.constant(p.value); });
}

// Inference on an already-adapted tensor.
inline Tensor<float> synthesize(const Tensor<float>& adapted, const SynthesisWeights<float>& weights) {
  Tape<float> tape;
  return synthesize(tape.constant(adapted), weights).value();
}

// Reconstruction in [-1, 1] from quantized latents.
inline Tensor<float> decode(const LatentSet& latents, const SynthesisWeights<float>& weights) {
  const std::size_t expected = decoder_input_width(latents.config, latents.transmitted);
  if (weights.input_width != expected) {
    throw SnapshotError("decoder snapshot takes " + std::to_string(weights.input_width) +
                        " adapted channels but the stream carries n=" + std::to_string(latents.transmitted) +
                        " channels (C_d=" + std::to_string(expected) + "); load the n=" +
                        std::to_string(latents.transmitted) + " snapshot");
  }
  if (weights.decoder_patch != latents.config.decoder_patch ||
      weights.output_channels != latents.config.input_channels) {
    throw SnapshotError("decoder geometry does not match the stream's codec config");
  }
  return synthesize(adapt(latents, latents.config.decoder_patch), weights);
}

}  // namespace frappe
