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

// Analysis transform: one strided projection per scale group, softsign
// companding, a per-channel multiplier, and rounding to signed 8 bits.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <thread>
#include <vector>

#include "frappe/config.hpp"
#include "frappe/error.hpp"
#include "frappe/numerics/ops.hpp"
#include "frappe/numerics/random.hpp"
#include "frappe/numerics/tensor.hpp"

namespace frappe {

inline constexpr int kLatentMax = 127;

// r * u / (sigma + |u|) with r = 127; strictly inside (-127, 127).
inline double compand(double u, double sigma) {
  if (!(sigma > 0.0)) throw ParameterError("compand: sigma must be positive, got " + std::to_string(sigma));
  return ops::compand_scalar(u, sigma);
}

// Channel-wise compander over [C, ...] with sigma of length C.
template <class T>
Tensor<T> compand(const Tensor<T>& u, const Tensor<T>& sigma) {
  return ops::compand(u, sigma);
}

// Round half away from zero, clamp to the signed 8-bit latent range.
inline std::int8_t quantize_latent(double v) {
  const double r = std::clamp(std::round(v), -double(kLatentMax), double(kLatentMax));
  return static_cast<std::int8_t>(r);
}

struct EncoderWeights {
  std::vector<Tensor<float>> kernels;  // per scale: [n_s, C, p_s...]
  std::vector<Tensor<float>> biases;   // per scale: [n_s]
  Tensor<float> sigma;                 // [N], positive
  Tensor<float> multiplier;            // [N]

  bool operator==(const EncoderWeights&) const = default;

  static Shape kernel_shape(const CodecConfig& config, std::size_t s) {
    Shape shape{config.scales.at(s).channels, config.input_channels};
    for (std::size_t d = 0; d < config.rank; ++d) shape.push_back(config.scales[s].patch);
    return shape;
  }

  // Zero projections, unit sigma and multiplier.
  static EncoderWeights zeros(const CodecConfig& config) {
    config.validate();
    EncoderWeights w;
    for (std::size_t s = 0; s < config.scales.size(); ++s) {
      w.kernels.emplace_back(kernel_shape(config, s));
      w.biases.emplace_back(Shape{config.scales[s].channels});
    }
    w.sigma = Tensor<float>(Shape{config.total_channels()}, 1.0f);
    w.multiplier = Tensor<float>(Shape{config.total_channels()}, 1.0f);
    return w;
  }

  // Gaussian projections with variance 1/(C p^D).
  static EncoderWeights random(const CodecConfig& config, Rng& rng) {
    EncoderWeights w = zeros(config);
    for (std::size_t s = 0; s < config.scales.size(); ++s) {
      const double fan_in = double(config.input_channels) * double(int_pow(config.scales[s].patch, config.rank));
      const double stddev = 1.0 / std::sqrt(fan_in);
      for (auto& v : w.kernels[s].values()) v = static_cast<float>(rng.normal() * stddev);
    }
    return w;
  }

  void validate(const CodecConfig& config) const {
    if (kernels.size() != config.scales.size() || biases.size() != config.scales.size()) {
      throw DimensionError("encoder weights have " + std::to_string(kernels.size()) + " scale groups, config has " +
                           std::to_string(config.scales.size()));
    }
    for (std::size_t s = 0; s < config.scales.size(); ++s) {
      if (kernels[s].shape() != kernel_shape(config, s)) {
        throw DimensionError("encoder kernel " + std::to_string(s) + " has shape " + shape_string(kernels[s].shape()) +
                             ", expected " + shape_string(kernel_shape(config, s)));
      }
      if (biases[s].size() != config.scales[s].channels) {
        throw DimensionError("encoder bias " + std::to_string(s) + " has wrong length");
      }
    }
    const std::size_t n = config.total_channels();
    if (sigma.size() != n || multiplier.size() != n) {
      throw DimensionError("encoder needs " + std::to_string(n) + " sigma and multiplier entries");
    }
    for (std::size_t c = 0; c < n; ++c) {
      if (!(sigma[c] > 0.0f)) throw ParameterError("sigma[" + std::to_string(c) + "] must be positive");
    }
  }
};

// Quantized latents of one scale group: its first `channels` channels.
struct ScaleLatents {
  std::size_t channels = 0;
  Shape grid;                       // spatial extents T_d / p_s
  std::vector<std::int8_t> values;  // [channels, grid...] row-major

  bool operator==(const ScaleLatents&) const = default;
  std::size_t sites() const { return shape_product(grid); }
};

struct LatentSet {
  CodecConfig config;
  std::size_t transmitted = 0;   // n
  Shape extents;                 // original T_1..T_D
  std::vector<ScaleLatents> scales;  // one per scale group; unpopulated have 0 channels

  bool operator==(const LatentSet&) const = default;

  // Drop every channel at or beyond n.
  LatentSet truncated(std::size_t n) const {
    if (n > transmitted || n < 1) {
      throw ParameterError("cannot keep " + std::to_string(n) + " of " + std::to_string(transmitted) + " channels");
    }
    LatentSet out = *this;
    out.transmitted = n;
    const auto k = config.populated(n);
    for (std::size_t s = 0; s < scales.size(); ++s) {
      out.scales[s].channels = k[s];
      out.scales[s].values.resize(k[s] * scales[s].sites());
    }
    return out;
  }
};

namespace detail {

// Pre-rounding latent for every populated channel of scale s, in double.
inline std::vector<double> scale_activations(const Tensor<float>& x, const EncoderWeights& w,
                                             const CodecConfig& config, std::size_t s, std::size_t k) {
  const std::size_t p = config.scales[s].patch;
  const Shape coarse = ops::coarse_extents(x.spatial(), p, "encode_latents");
  const ops::PatchIndex idx = ops::make_patch_index(coarse, p);
  const std::size_t nc = idx.coarse_sites(), P = idx.patch, nf = x.sites(), C = config.input_channels;
  const std::size_t base = config.scale_offset(s);
  std::vector<double> out(k * nc);
  const Tensor<float>& kernel = w.kernels[s];
  for (std::size_t j = 0; j < k; ++j) {
    const double bias = w.biases[s][j];
    const double sigma = w.sigma[base + j];
    const double mult = w.multiplier[base + j];
    for (std::size_t o = 0; o < nc; ++o) {
      double acc = bias;
      const std::size_t* sites = &idx.fine_site[o * P];
      for (std::size_t c = 0; c < C; ++c) {
        const float* wk = kernel.data() + (j * C + c) * P;
        const float* xc = x.data() + c * nf;
        for (std::size_t q = 0; q < P; ++q) acc += double(wk[q]) * double(xc[sites[q]]);
      }
      out[j * nc + o] = mult * ops::compand_scalar(acc, sigma);
    }
  }
  return out;
}

inline ScaleLatents encode_scale(const Tensor<float>& x, const EncoderWeights& w, const CodecConfig& config,
                                 std::size_t s, std::size_t k) {
  ScaleLatents out;
  out.channels = k;
  out.grid = x.spatial();
  for (auto& e : out.grid) e /= config.scales[s].patch;
  if (k == 0) return out;
  const std::vector<double> act = scale_activations(x, w, config, s, k);
  out.values.resize(act.size());
  for (std::size_t i = 0; i < act.size(); ++i) out.values[i] = quantize_latent(act[i]);
  return out;
}

inline void check_encode_inputs(const Tensor<float>& x, const EncoderWeights& w, const CodecConfig& config,
                                std::size_t n) {
  config.validate();
  config.check_channel_count(n);
  if (x.rank() != config.rank + 1 || x.channels() != config.input_channels) {
    throw DimensionError("input " + shape_string(x.shape()) + " does not match " + config.describe());
  }
  config.check_extents(x.spatial());
  w.validate(config);
}

}  // namespace detail

// Hard-rounded latents for the first n channels of `config`.
//
// Scale groups are independent; with threads > 1 they are encoded
// concurrently and the result is identical to the serial one.
inline LatentSet encode_latents(const Tensor<float>& x, const EncoderWeights& weights, const CodecConfig& config,
                                std::size_t n, unsigned threads = 1) {
  detail::check_encode_inputs(x, weights, config, n);
  const auto k = config.populated(n);
  LatentSet out;
  out.config = config;
  out.transmitted = n;
  out.extents = x.spatial();
  out.scales.resize(config.scales.size());
  const std::size_t S = config.scales.size();
  if (threads <= 1 || S == 1) {
    for (std::size_t s = 0; s < S; ++s) out.scales[s] = detail::encode_scale(x, weights, config, s, k[s]);
    return out;
  }
  const std::size_t workers = std::min<std::size_t>(threads, S);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t s = t; s < S; s += workers) out.scales[s] = detail::encode_scale(x, weights, config, s, k[s]);
      });
    }
  }
  return out;
}

// Training-time surrogate: the same activations plus i.i.d. uniform noise on
// (-0.5, 0.5) instead of rounding. One real tensor per populated scale.
inline std::vector<Tensor<float>> encode_latents_noisy(const Tensor<float>& x, const EncoderWeights& weights,
                                                       const CodecConfig& config, std::size_t n, Rng& rng) {
  detail::check_encode_inputs(x, weights, config, n);
  const auto k = config.populated(n);
  std::vector<Tensor<float>> out;
  for (std::size_t s = 0; s < config.scales.size() && k[s] > 0; ++s) {
    std::vector<double> act = detail::scale_activations(x, weights, config, s, k[s]);
    Shape shape{k[s]};
    for (std::size_t d = 0; d < config.rank; ++d) shape.push_back(x.spatial()[d] / config.scales[s].patch);
    std::vector<float> vals(act.size());
    for (std::size_t i = 0; i < act.size(); ++i) vals[i] = static_cast<float>(act[i] + rng.uniform_open(-0.5, 0.5));
    out.emplace_back(shape, std::move(vals));
  }
  return out;
}

struct AnalysisCost {
  double projection_macs = 0;               // C * N
  std::vector<double> compand_per_scale;    // 4 n_s / p_s^D
  double total() const {
    double t = projection_macs;
    for (double c : compand_per_scale) t += c;
    return t;
  }
  double compand_total() const { return total() - projection_macs; }
};

// Operations per input sample of the analysis path.
inline AnalysisCost analysis_cost(const CodecConfig& config) {
  config.validate();
  AnalysisCost cost;
  cost.projection_macs = double(config.input_channels) * double(config.total_channels());
  for (const auto& s : config.scales) {
    cost.compand_per_scale.push_back(4.0 * double(s.channels) / double(int_pow(s.patch, config.rank)));
  }
  return cost;
}

// Channel count C_d the decoder sees after rebinning the first n latents.
inline std::size_t decoder_input_width(const CodecConfig& config, std::size_t n) {
  config.validate();
  const auto k = config.populated(n);
  std::size_t width = 0;
  for (std::size_t s = 0; s < config.scales.size(); ++s) {
    const std::size_t p = config.scales[s].patch;
    if (p <= config.decoder_patch) {
      width += k[s] * int_pow(config.decoder_patch / p, config.rank);
    } else {
      width += k[s];
    }
  }
  return width;
}

}  // namespace frappe
