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

// Forward kernels and their adjoints over channels-first tensors.
//
// Storage is T (float in production, double for gradient checks); every
// reduction accumulates in double. Spatial rank is whatever follows the
// channel axis, so the same kernels serve 1-D, 2-D and 3-D signals.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "frappe/numerics/tensor.hpp"

namespace frappe::ops {

using Acc = double;

// tanh-approximation GELU constant sqrt(2/pi).
inline constexpr double kGeluSqrt2OverPi = 0.7978845608028654;
inline constexpr double kGeluCubic = 0.044715;
inline constexpr double kLayerNormEpsilon = 1e-6;

// ---------------------------------------------------------------------------
// Index tables

// Maps (coarse site, offset inside a stride^D block) to the fine site.
struct PatchIndex {
  Shape coarse;
  Shape fine;
  std::size_t patch = 1;  // stride^D
  std::vector<std::size_t> fine_site;  // [coarse_site * patch + q]

  std::size_t coarse_sites() const { return shape_product(coarse); }
};

inline PatchIndex make_patch_index(const Shape& coarse, std::size_t stride) {
  PatchIndex idx;
  idx.coarse = coarse;
  idx.fine = coarse;
  for (auto& e : idx.fine) e *= stride;
  const std::size_t dims = coarse.size();
  idx.patch = 1;
  for (std::size_t d = 0; d < dims; ++d) idx.patch *= stride;
  const std::size_t n_coarse = shape_product(coarse);
  idx.fine_site.resize(n_coarse * idx.patch);

  std::vector<std::size_t> o(dims, 0), q(dims, 0);
  for (std::size_t oc = 0; oc < n_coarse; ++oc) {
    std::fill(q.begin(), q.end(), 0);
    for (std::size_t qi = 0; qi < idx.patch; ++qi) {
      std::size_t f = 0;
      for (std::size_t d = 0; d < dims; ++d) f = f * idx.fine[d] + (o[d] * stride + q[d]);
      idx.fine_site[oc * idx.patch + qi] = f;
      for (std::size_t d = dims; d-- > 0;) {
        if (++q[d] < stride) break;
        q[d] = 0;
      }
    }
    for (std::size_t d = dims; d-- > 0;) {
      if (++o[d] < coarse[d]) break;
      o[d] = 0;
    }
  }
  return idx;
}

inline Shape coarse_extents(const Shape& fine, std::size_t stride, const char* what) {
  if (stride == 0) throw ParameterError(std::string(what) + ": stride must be positive");
  Shape coarse(fine.size());
  std::string bad;
  for (std::size_t d = 0; d < fine.size(); ++d) {
    if (fine[d] % stride != 0) bad += (bad.empty() ? "" : ",") + std::to_string(d + 1);
    coarse[d] = fine[d] / stride;
  }
  if (!bad.empty()) {
    throw DimensionError(std::string(what) + ": spatial extents " + shape_string(fine) +
                         " not divisible by stride " + std::to_string(stride) + " on axes {" + bad + "}");
  }
  return coarse;
}

// Same-padded 3^D stencil: for each tap, the (output site, input site) pairs
// that land inside the grid.
struct StencilIndex {
  std::size_t taps = 1;
  std::vector<std::vector<std::uint32_t>> out_site;
  std::vector<std::vector<std::uint32_t>> in_site;
};

inline StencilIndex make_stencil_index(const Shape& extents) {
  const std::size_t dims = extents.size();
  StencilIndex st;
  for (std::size_t d = 0; d < dims; ++d) st.taps *= 3;
  st.out_site.resize(st.taps);
  st.in_site.resize(st.taps);
  const std::size_t n = shape_product(extents);
  std::vector<long> off(dims);
  std::vector<std::size_t> pos(dims);
  for (std::size_t t = 0; t < st.taps; ++t) {
    std::size_t rem = t;
    for (std::size_t d = dims; d-- > 0;) {
      off[d] = static_cast<long>(rem % 3) - 1;
      rem /= 3;
    }
    std::fill(pos.begin(), pos.end(), 0);
    for (std::size_t s = 0; s < n; ++s) {
      bool inside = true;
      std::size_t src = 0;
      for (std::size_t d = 0; d < dims; ++d) {
        const long p = static_cast<long>(pos[d]) + off[d];
        if (p < 0 || p >= static_cast<long>(extents[d])) {
          inside = false;
          break;
        }
        src = src * extents[d] + static_cast<std::size_t>(p);
      }
      if (inside) {
        st.out_site[t].push_back(static_cast<std::uint32_t>(s));
        st.in_site[t].push_back(static_cast<std::uint32_t>(src));
      }
      for (std::size_t d = dims; d-- > 0;) {
        if (++pos[d] < extents[d]) break;
        pos[d] = 0;
      }
    }
  }
  return st;
}

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

template <class T>
void check_kernel(const Tensor<T>& kernel, std::size_t lead0, std::size_t lead1, std::size_t dims,
                  std::size_t extent, const char* what) {
  require(kernel.rank() == dims + 2,
          std::string(what) + ": kernel rank " + std::to_string(kernel.rank()) + " expected " +
              std::to_string(dims + 2));
  if (lead0 != 0) {
    require(kernel.shape()[0] == lead0, std::string(what) + ": kernel axis 0 is " +
                                            std::to_string(kernel.shape()[0]) + ", expected " +
                                            std::to_string(lead0));
  }
  require(kernel.shape()[1] == lead1, std::string(what) + ": kernel axis 1 is " +
                                          std::to_string(kernel.shape()[1]) + ", expected " +
                                          std::to_string(lead1));
  for (std::size_t d = 0; d < dims; ++d) {
    require(kernel.shape()[2 + d] == extent, std::string(what) + ": kernel spatial axis " +
                                                 std::to_string(2 + d) + " is " +
                                                 std::to_string(kernel.shape()[2 + d]) +
                                                 ", expected " + std::to_string(extent));
  }
}

template <class T>
void check_vector(const Tensor<T>& v, std::size_t n, const char* what, const char* name) {
  require(v.size() == n, std::string(what) + ": " + name + " length " + std::to_string(v.size()) +
                             " expected " + std::to_string(n));
}

template <class T>
void accumulate(Tensor<T>& dst, std::span<const Acc> src, std::size_t offset = 0) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[offset + i] += static_cast<T>(src[i]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Strided (non-overlapping patch) convolution.
// input [C, T...], kernel [O, C, p...], bias [O] -> [O, T/p...]

template <class T>
Tensor<T> conv_strided(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                       std::size_t stride) {
  const Shape fine = input.spatial();
  const std::size_t dims = fine.size();
  const std::size_t in_c = input.channels();
  detail::check_kernel(kernel, 0, in_c, dims, stride, "conv_strided");
  const std::size_t out_c = kernel.shape()[0];
  detail::check_vector(bias, out_c, "conv_strided", "bias");
  const Shape coarse = coarse_extents(fine, stride, "conv_strided");
  const PatchIndex idx = make_patch_index(coarse, stride);
  const std::size_t nc = idx.coarse_sites(), P = idx.patch, nf = input.sites();

  Shape out_shape{out_c};
  out_shape.insert(out_shape.end(), coarse.begin(), coarse.end());
  Tensor<T> out(out_shape);
  for (std::size_t k = 0; k < out_c; ++k) {
    for (std::size_t o = 0; o < nc; ++o) {
      Acc acc = bias[k];
      const std::size_t* sites = &idx.fine_site[o * P];
      for (std::size_t c = 0; c < in_c; ++c) {
        const T* w = kernel.data() + (k * in_c + c) * P;
        const T* x = input.data() + c * nf;
        for (std::size_t q = 0; q < P; ++q) acc += static_cast<Acc>(w[q]) * x[sites[q]];
      }
      out[k * nc + o] = static_cast<T>(acc);
    }
  }
  return out;
}

template <class T>
void conv_strided_backward(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                           const Tensor<T>& grad_out, Tensor<T>* grad_in, Tensor<T>* grad_kernel,
                           Tensor<T>* grad_bias) {
  const std::size_t in_c = input.channels(), out_c = kernel.shape()[0];
  const PatchIndex idx = make_patch_index(grad_out.spatial(), stride);
  const std::size_t nc = idx.coarse_sites(), P = idx.patch, nf = input.sites();
  if (grad_bias) {
    for (std::size_t k = 0; k < out_c; ++k) {
      Acc acc = 0;
      for (std::size_t o = 0; o < nc; ++o) acc += grad_out[k * nc + o];
      (*grad_bias)[k] += static_cast<T>(acc);
    }
  }
  if (grad_kernel) {
    std::vector<Acc> acc(P);
    for (std::size_t k = 0; k < out_c; ++k) {
      for (std::size_t c = 0; c < in_c; ++c) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const T* x = input.data() + c * nf;
        for (std::size_t o = 0; o < nc; ++o) {
          const Acc g = grad_out[k * nc + o];
          const std::size_t* sites = &idx.fine_site[o * P];
          for (std::size_t q = 0; q < P; ++q) acc[q] += g * x[sites[q]];
        }
        detail::accumulate(*grad_kernel, acc, (k * in_c + c) * P);
      }
    }
  }
  if (grad_in) {
    for (std::size_t c = 0; c < in_c; ++c) {
      std::vector<Acc> acc(nf, 0.0);
      for (std::size_t k = 0; k < out_c; ++k) {
        const T* w = kernel.data() + (k * in_c + c) * P;
        for (std::size_t o = 0; o < nc; ++o) {
          const Acc g = grad_out[k * nc + o];
          const std::size_t* sites = &idx.fine_site[o * P];
          for (std::size_t q = 0; q < P; ++q) acc[sites[q]] += g * w[q];
        }
      }
      detail::accumulate(*grad_in, acc, c * nf);
    }
  }
}

// ---------------------------------------------------------------------------
// Transposed strided convolution: each input site scatters into a disjoint
// stride^D block. input [I, t...], kernel [I, O, p...], bias [O] -> [O, t*p...]

template <class T>
Tensor<T> conv_transposed(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                          std::size_t stride) {
  if (stride == 0) throw ParameterError("conv_transposed: stride must be positive");
  const Shape coarse = input.spatial();
  const std::size_t dims = coarse.size();
  const std::size_t in_c = input.channels();
  detail::require(kernel.rank() == dims + 2 && kernel.shape()[0] == in_c,
                  "conv_transposed: kernel " + shape_string(kernel.shape()) +
                      " does not match input channels " + std::to_string(in_c));
  const std::size_t out_c = kernel.shape()[1];
  detail::check_kernel(kernel, in_c, out_c, dims, stride, "conv_transposed");
  detail::check_vector(bias, out_c, "conv_transposed", "bias");
  const PatchIndex idx = make_patch_index(coarse, stride);
  const std::size_t nc = idx.coarse_sites(), P = idx.patch;
  const std::size_t nf = nc * P;

  Shape out_shape{out_c};
  out_shape.insert(out_shape.end(), idx.fine.begin(), idx.fine.end());
  Tensor<T> out(out_shape);
  std::vector<Acc> acc(P);
  for (std::size_t k = 0; k < out_c; ++k) {
    for (std::size_t o = 0; o < nc; ++o) {
      std::fill(acc.begin(), acc.end(), static_cast<Acc>(bias[k]));
      for (std::size_t i = 0; i < in_c; ++i) {
        const Acc v = input[i * nc + o];
        const T* w = kernel.data() + (i * out_c + k) * P;
        for (std::size_t q = 0; q < P; ++q) acc[q] += v * w[q];
      }
      const std::size_t* sites = &idx.fine_site[o * P];
      for (std::size_t q = 0; q < P; ++q) out[k * nf + sites[q]] = static_cast<T>(acc[q]);
    }
  }
  return out;
}

template <class T>
void conv_transposed_backward(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                              const Tensor<T>& grad_out, Tensor<T>* grad_in, Tensor<T>* grad_kernel,
                              Tensor<T>* grad_bias) {
  const std::size_t in_c = input.channels(), out_c = kernel.shape()[1];
  const PatchIndex idx = make_patch_index(input.spatial(), stride);
  const std::size_t nc = idx.coarse_sites(), P = idx.patch, nf = nc * P;
  if (grad_bias) {
    for (std::size_t k = 0; k < out_c; ++k) {
      Acc acc = 0;
      for (std::size_t f = 0; f < nf; ++f) acc += grad_out[k * nf + f];
      (*grad_bias)[k] += static_cast<T>(acc);
    }
  }
  for (std::size_t i = 0; i < in_c; ++i) {
    std::vector<Acc> gin(nc, 0.0);
    for (std::size_t k = 0; k < out_c; ++k) {
      const T* w = kernel.data() + (i * out_c + k) * P;
      std::vector<Acc> gw(P, 0.0);
      for (std::size_t o = 0; o < nc; ++o) {
        const std::size_t* sites = &idx.fine_site[o * P];
        const Acc v = input[i * nc + o];
        Acc dot = 0;
        for (std::size_t q = 0; q < P; ++q) {
          const Acc g = grad_out[k * nf + sites[q]];
          dot += g * w[q];
          gw[q] += g * v;
        }
        gin[o] += dot;
      }
      if (grad_kernel) detail::accumulate(*grad_kernel, gw, (i * out_c + k) * P);
    }
    if (grad_in) detail::accumulate(*grad_in, gin, i * nc);
  }
}

// ---------------------------------------------------------------------------
// Same-padded kernel-3 convolution. input [I, T...], kernel [O, I, 3...].

template <class T>
Tensor<T> conv3(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
  const Shape ext = input.spatial();
  const std::size_t in_c = input.channels();
  detail::check_kernel(kernel, 0, in_c, ext.size(), 3, "conv3");
  const std::size_t out_c = kernel.shape()[0];
  detail::check_vector(bias, out_c, "conv3", "bias");
  const StencilIndex st = make_stencil_index(ext);
  const std::size_t n = input.sites();
  Shape out_shape{out_c};
  out_shape.insert(out_shape.end(), ext.begin(), ext.end());
  Tensor<T> out(out_shape);
  std::vector<Acc> acc(n);
  for (std::size_t o = 0; o < out_c; ++o) {
    std::fill(acc.begin(), acc.end(), static_cast<Acc>(bias[o]));
    for (std::size_t i = 0; i < in_c; ++i) {
      const T* x = input.data() + i * n;
      const T* w = kernel.data() + (o * in_c + i) * st.taps;
      for (std::size_t t = 0; t < st.taps; ++t) {
        const Acc wt = w[t];
        const auto& os = st.out_site[t];
        const auto& is = st.in_site[t];
        for (std::size_t j = 0; j < os.size(); ++j) acc[os[j]] += wt * x[is[j]];
      }
    }
    for (std::size_t s = 0; s < n; ++s) out[o * n + s] = static_cast<T>(acc[s]);
  }
  return out;
}

template <class T>
void conv3_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                    Tensor<T>* grad_in, Tensor<T>* grad_kernel, Tensor<T>* grad_bias) {
  const std::size_t in_c = input.channels(), out_c = kernel.shape()[0];
  const StencilIndex st = make_stencil_index(input.spatial());
  const std::size_t n = input.sites();
  if (grad_bias) {
    for (std::size_t o = 0; o < out_c; ++o) {
      Acc acc = 0;
      for (std::size_t s = 0; s < n; ++s) acc += grad_out[o * n + s];
      (*grad_bias)[o] += static_cast<T>(acc);
    }
  }
  std::vector<Acc> gin(grad_in ? in_c * n : 0, 0.0);
  for (std::size_t o = 0; o < out_c; ++o) {
    const T* g = grad_out.data() + o * n;
    for (std::size_t i = 0; i < in_c; ++i) {
      const T* x = input.data() + i * n;
      const T* w = kernel.data() + (o * in_c + i) * st.taps;
      for (std::size_t t = 0; t < st.taps; ++t) {
        const auto& os = st.out_site[t];
        const auto& is = st.in_site[t];
        if (grad_kernel) {
          Acc acc = 0;
          for (std::size_t j = 0; j < os.size(); ++j) acc += static_cast<Acc>(g[os[j]]) * x[is[j]];
          (*grad_kernel)[(o * in_c + i) * st.taps + t] += static_cast<T>(acc);
        }
        if (grad_in) {
          const Acc wt = w[t];
          Acc* gi = gin.data() + i * n;
          for (std::size_t j = 0; j < os.size(); ++j) gi[is[j]] += wt * g[os[j]];
        }
      }
    }
  }
  if (grad_in) detail::accumulate(*grad_in, gin);
}

// Depthwise same-padded kernel-3 convolution. kernel [C, 1, 3...].
template <class T>
Tensor<T> depthwise3(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
  const Shape ext = input.spatial();
  const std::size_t ch = input.channels();
  detail::check_kernel(kernel, ch, 1, ext.size(), 3, "depthwise3");
  detail::check_vector(bias, ch, "depthwise3", "bias");
  const StencilIndex st = make_stencil_index(ext);
  const std::size_t n = input.sites();
  Tensor<T> out(input.shape());
  std::vector<Acc> acc(n);
  for (std::size_t c = 0; c < ch; ++c) {
    std::fill(acc.begin(), acc.end(), static_cast<Acc>(bias[c]));
    const T* x = input.data() + c * n;
    for (std::size_t t = 0; t < st.taps; ++t) {
      const Acc wt = kernel[c * st.taps + t];
      const auto& os = st.out_site[t];
      const auto& is = st.in_site[t];
      for (std::size_t j = 0; j < os.size(); ++j) acc[os[j]] += wt * x[is[j]];
    }
    for (std::size_t s = 0; s < n; ++s) out[c * n + s] = static_cast<T>(acc[s]);
  }
  return out;
}

template <class T>
void depthwise3_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                         Tensor<T>* grad_in, Tensor<T>* grad_kernel, Tensor<T>* grad_bias) {
  const std::size_t ch = input.channels();
  const StencilIndex st = make_stencil_index(input.spatial());
  const std::size_t n = input.sites();
  std::vector<Acc> gi(n);
  for (std::size_t c = 0; c < ch; ++c) {
    const T* g = grad_out.data() + c * n;
    const T* x = input.data() + c * n;
    if (grad_bias) {
      Acc acc = 0;
      for (std::size_t s = 0; s < n; ++s) acc += g[s];
      (*grad_bias)[c] += static_cast<T>(acc);
    }
    std::fill(gi.begin(), gi.end(), 0.0);
    for (std::size_t t = 0; t < st.taps; ++t) {
      const auto& os = st.out_site[t];
      const auto& is = st.in_site[t];
      Acc acc = 0;
      const Acc wt = kernel[c * st.taps + t];
      for (std::size_t j = 0; j < os.size(); ++j) {
        acc += static_cast<Acc>(g[os[j]]) * x[is[j]];
        gi[is[j]] += wt * g[os[j]];
      }
      if (grad_kernel) (*grad_kernel)[c * st.taps + t] += static_cast<T>(acc);
    }
    if (grad_in) detail::accumulate(*grad_in, gi, c * n);
  }
}

// ---------------------------------------------------------------------------
// Pointwise (1x1) convolution. kernel [O, I].

template <class T>
Tensor<T> pointwise(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
  const std::size_t in_c = input.channels();
  detail::require(kernel.rank() == 2 && kernel.shape()[1] == in_c,
                  "pointwise: kernel " + shape_string(kernel.shape()) + " does not accept " +
                      std::to_string(in_c) + " input channels");
  const std::size_t out_c = kernel.shape()[0];
  detail::check_vector(bias, out_c, "pointwise", "bias");
  const std::size_t n = input.sites();
  Shape out_shape = input.shape();
  out_shape[0] = out_c;
  Tensor<T> out(out_shape);
  std::vector<Acc> acc(n);
  for (std::size_t o = 0; o < out_c; ++o) {
    std::fill(acc.begin(), acc.end(), static_cast<Acc>(bias[o]));
    for (std::size_t i = 0; i < in_c; ++i) {
      const Acc w = kernel[o * in_c + i];
      const T* x = input.data() + i * n;
      for (std::size_t s = 0; s < n; ++s) acc[s] += w * x[s];
    }
    T* y = out.data() + o * n;
    for (std::size_t s = 0; s < n; ++s) y[s] = static_cast<T>(acc[s]);
  }
  return out;
}

template <class T>
void pointwise_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                        Tensor<T>* grad_in, Tensor<T>* grad_kernel, Tensor<T>* grad_bias) {
  const std::size_t in_c = input.channels(), out_c = kernel.shape()[0];
  const std::size_t n = input.sites();
  for (std::size_t o = 0; o < out_c; ++o) {
    const T* g = grad_out.data() + o * n;
    if (grad_bias) {
      Acc acc = 0;
      for (std::size_t s = 0; s < n; ++s) acc += g[s];
      (*grad_bias)[o] += static_cast<T>(acc);
    }
    if (grad_kernel) {
      for (std::size_t i = 0; i < in_c; ++i) {
        const T* x = input.data() + i * n;
        Acc acc = 0;
        for (std::size_t s = 0; s < n; ++s) acc += static_cast<Acc>(g[s]) * x[s];
        (*grad_kernel)[o * in_c + i] += static_cast<T>(acc);
      }
    }
  }
  if (grad_in) {
    std::vector<Acc> acc(n);
    for (std::size_t i = 0; i < in_c; ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t o = 0; o < out_c; ++o) {
        const Acc w = kernel[o * in_c + i];
        const T* g = grad_out.data() + o * n;
        for (std::size_t s = 0; s < n; ++s) acc[s] += w * g[s];
      }
      detail::accumulate(*grad_in, acc, i * n);
    }
  }
}

// ---------------------------------------------------------------------------
// Layer normalization across channels at every site.

template <class T>
struct LayerNormResult {
  Tensor<T> output;
  Tensor<T> normalized;       // (x - mean) * rstd
  std::vector<Acc> rstd;      // per site
};

template <class T>
LayerNormResult<T> layer_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                              double epsilon = kLayerNormEpsilon) {
  const std::size_t ch = input.channels(), n = input.sites();
  detail::check_vector(gamma, ch, "layer_norm", "gamma");
  detail::check_vector(beta, ch, "layer_norm", "beta");
  LayerNormResult<T> r{Tensor<T>(input.shape()), Tensor<T>(input.shape()), std::vector<Acc>(n)};
  for (std::size_t s = 0; s < n; ++s) {
    Acc mean = 0;
    for (std::size_t c = 0; c < ch; ++c) mean += input[c * n + s];
    mean /= static_cast<Acc>(ch);
    Acc var = 0;
    for (std::size_t c = 0; c < ch; ++c) {
      const Acc d = input[c * n + s] - mean;
      var += d * d;
    }
    var /= static_cast<Acc>(ch);
    const Acc denom = std::sqrt(var + epsilon);
    const Acc rstd = denom > 0 ? 1.0 / denom : 0.0;
    r.rstd[s] = rstd;
    for (std::size_t c = 0; c < ch; ++c) {
      const Acc xh = (input[c * n + s] - mean) * rstd;
      r.normalized[c * n + s] = static_cast<T>(xh);
      r.output[c * n + s] = static_cast<T>(xh * gamma[c] + beta[c]);
    }
  }
  return r;
}

template <class T>
void layer_norm_backward(const LayerNormResult<T>& fwd, const Tensor<T>& gamma, const Tensor<T>& grad_out,
                         Tensor<T>* grad_in, Tensor<T>* grad_gamma, Tensor<T>* grad_beta) {
  const std::size_t ch = grad_out.channels(), n = grad_out.sites();
  if (grad_gamma || grad_beta) {
    for (std::size_t c = 0; c < ch; ++c) {
      Acc gg = 0, gb = 0;
      for (std::size_t s = 0; s < n; ++s) {
        gg += static_cast<Acc>(grad_out[c * n + s]) * fwd.normalized[c * n + s];
        gb += grad_out[c * n + s];
      }
      if (grad_gamma) (*grad_gamma)[c] += static_cast<T>(gg);
      if (grad_beta) (*grad_beta)[c] += static_cast<T>(gb);
    }
  }
  if (!grad_in) return;
  const Acc inv_c = 1.0 / static_cast<Acc>(ch);
  for (std::size_t s = 0; s < n; ++s) {
    Acc sum_g = 0, sum_gx = 0;
    for (std::size_t c = 0; c < ch; ++c) {
      const Acc gxh = static_cast<Acc>(grad_out[c * n + s]) * gamma[c];
      sum_g += gxh;
      sum_gx += gxh * fwd.normalized[c * n + s];
    }
    for (std::size_t c = 0; c < ch; ++c) {
      const Acc gxh = static_cast<Acc>(grad_out[c * n + s]) * gamma[c];
      const Acc xh = fwd.normalized[c * n + s];
      (*grad_in)[c * n + s] += static_cast<T>(fwd.rstd[s] * (gxh - inv_c * sum_g - xh * inv_c * sum_gx));
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise activations.

inline double gelu_scalar(double x) {
  const double inner = kGeluSqrt2OverPi * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(inner));
}

inline double gelu_derivative(double x) {
  const double inner = kGeluSqrt2OverPi * (x + kGeluCubic * x * x * x);
  const double th = std::tanh(inner);
  const double dinner = kGeluSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner;
}

template <class T>
Tensor<T> gelu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = static_cast<T>(gelu_scalar(input[i]));
  return out;
}

template <class T>
Tensor<T> hardtanh(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = std::clamp(input[i], T(-1), T(1));
  return out;
}

// ---------------------------------------------------------------------------
// Softsign compander r*u/(sigma_c + |u|), sigma per channel.

inline constexpr double kCompanderRange = 127.0;
// Largest double below the range. Once sigma / |u| drops under about 1e-16
// the quotient rounds up to the range itself; the clamp keeps it open.
inline constexpr double kCompanderPeak = 127.0 - 0x1p-46;

// Ratio first: u == sigma gives exactly 0.5 before scaling.
inline double compand_scalar(double u, double sigma) {
  const double v = kCompanderRange * (u / (sigma + std::abs(u)));
  return std::clamp(v, -kCompanderPeak, kCompanderPeak);
}

template <class T>
void check_sigma(const Tensor<T>& sigma, std::size_t channels) {
  detail::check_vector(sigma, channels, "compand", "sigma");
  for (std::size_t c = 0; c < channels; ++c) {
    if (!(sigma[c] > T(0))) {
      throw ParameterError("compand: sigma[" + std::to_string(c) + "] = " + std::to_string(sigma[c]) +
                           " must be positive");
    }
  }
}

template <class T>
Tensor<T> compand(const Tensor<T>& input, const Tensor<T>& sigma) {
  const std::size_t ch = input.channels(), n = input.sites();
  check_sigma(sigma, ch);
  Tensor<T> out(input.shape());
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t s = 0; s < n; ++s) {
      out[c * n + s] = static_cast<T>(compand_scalar(input[c * n + s], sigma[c]));
    }
  }
  return out;
}

template <class T>
void compand_backward(const Tensor<T>& input, const Tensor<T>& sigma, const Tensor<T>& grad_out,
                      Tensor<T>* grad_in, Tensor<T>* grad_sigma) {
  const std::size_t ch = input.channels(), n = input.sites();
  for (std::size_t c = 0; c < ch; ++c) {
    const Acc sg = sigma[c];
    Acc gs = 0;
    for (std::size_t s = 0; s < n; ++s) {
      const Acc u = input[c * n + s];
      const Acc den = sg + std::abs(u);
      const Acc g = grad_out[c * n + s];
      if (grad_in) (*grad_in)[c * n + s] += static_cast<T>(g * kCompanderRange * sg / (den * den));
      gs -= g * kCompanderRange * u / (den * den);
    }
    if (grad_sigma) (*grad_sigma)[c] += static_cast<T>(gs);
  }
}

// Per-channel multiplier (LayerScale, post-compander multiplier).
template <class T>
Tensor<T> channel_scale(const Tensor<T>& input, const Tensor<T>& scale) {
  const std::size_t ch = input.channels(), n = input.sites();
  detail::check_vector(scale, ch, "channel_scale", "scale");
  Tensor<T> out(input.shape());
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t s = 0; s < n; ++s) out[c * n + s] = input[c * n + s] * scale[c];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rebinning: space-to-depth fold, its inverse, nearest-neighbour upsampling.

// [C, T...] -> [C * f^D, T/f...]; channel c, block offset q -> c * f^D + q.
template <class T>
Tensor<T> space_to_depth(const Tensor<T>& input, std::size_t factor) {
  const Shape coarse = coarse_extents(input.spatial(), factor, "space_to_depth");
  const PatchIndex idx = make_patch_index(coarse, factor);
  const std::size_t ch = input.channels(), nc = idx.coarse_sites(), P = idx.patch, nf = input.sites();
  Shape out_shape{ch * P};
  out_shape.insert(out_shape.end(), coarse.begin(), coarse.end());
  Tensor<T> out(out_shape);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t o = 0; o < nc; ++o) {
      for (std::size_t q = 0; q < P; ++q) out[(c * P + q) * nc + o] = input[c * nf + idx.fine_site[o * P + q]];
    }
  }
  return out;
}

template <class T>
Tensor<T> depth_to_space(const Tensor<T>& input, std::size_t factor) {
  const Shape coarse = input.spatial();
  const PatchIndex idx = make_patch_index(coarse, factor);
  const std::size_t P = idx.patch, nc = idx.coarse_sites(), nf = nc * P;
  if (input.channels() % P != 0) {
    throw DimensionError("depth_to_space: " + std::to_string(input.channels()) +
                         " channels not divisible by " + std::to_string(P));
  }
  const std::size_t ch = input.channels() / P;
  Shape out_shape{ch};
  out_shape.insert(out_shape.end(), idx.fine.begin(), idx.fine.end());
  Tensor<T> out(out_shape);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t o = 0; o < nc; ++o) {
      for (std::size_t q = 0; q < P; ++q) out[c * nf + idx.fine_site[o * P + q]] = input[(c * P + q) * nc + o];
    }
  }
  return out;
}

// [C, t...] -> [C, t*f...], every block copies its source sample.
template <class T>
Tensor<T> upsample_nearest(const Tensor<T>& input, std::size_t factor) {
  if (factor == 0) throw ParameterError("upsample_nearest: factor must be positive");
  const PatchIndex idx = make_patch_index(input.spatial(), factor);
  const std::size_t ch = input.channels(), nc = idx.coarse_sites(), P = idx.patch, nf = nc * P;
  Shape out_shape{ch};
  out_shape.insert(out_shape.end(), idx.fine.begin(), idx.fine.end());
  Tensor<T> out(out_shape);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t o = 0; o < nc; ++o) {
      const T v = input[c * nc + o];
      for (std::size_t q = 0; q < P; ++q) out[c * nf + idx.fine_site[o * P + q]] = v;
    }
  }
  return out;
}

// Adjoint of upsample_nearest: block sums.
template <class T>
Tensor<T> block_sum(const Tensor<T>& input, std::size_t factor) {
  const Shape coarse = coarse_extents(input.spatial(), factor, "block_sum");
  const PatchIndex idx = make_patch_index(coarse, factor);
  const std::size_t ch = input.channels(), nc = idx.coarse_sites(), P = idx.patch, nf = input.sites();
  Shape out_shape{ch};
  out_shape.insert(out_shape.end(), coarse.begin(), coarse.end());
  Tensor<T> out(out_shape);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t o = 0; o < nc; ++o) {
      Acc acc = 0;
      for (std::size_t q = 0; q < P; ++q) acc += input[c * nf + idx.fine_site[o * P + q]];
      out[c * nc + o] = static_cast<T>(acc);
    }
  }
  return out;
}

// Channel-wise concatenation; spatial extents must agree.
template <class T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: nothing to concatenate");
  const Shape sp = parts.front()->spatial();
  std::size_t ch = 0;
  for (const auto* p : parts) {
    if (p->spatial() != sp) {
      throw DimensionError("concat_channels: spatial extents " + shape_string(p->spatial()) + " vs " +
                           shape_string(sp));
    }
    ch += p->channels();
  }
  Shape out_shape{ch};
  out_shape.insert(out_shape.end(), sp.begin(), sp.end());
  Tensor<T> out(out_shape);
  std::size_t at = 0;
  for (const auto* p : parts) {
    std::copy(p->values().begin(), p->values().end(), out.data() + at);
    at += p->size();
  }
  return out;
}

template <class T>
Tensor<T> slice_channels(const Tensor<T>& input, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > input.channels()) {
    throw DimensionError("slice_channels: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + std::to_string(input.channels()) + " channels");
  }
  Shape out_shape = input.shape();
  out_shape[0] = count;
  const std::size_t n = input.sites();
  std::vector<T> data(input.data() + begin * n, input.data() + (begin + count) * n);
  return Tensor<T>(out_shape, std::move(data));
}

}  // namespace frappe::ops
