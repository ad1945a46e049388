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

// Define-by-run reverse-mode differentiation over Tensor<T>.
//
// A Tape is rebuilt for every training step. Nodes are appended in
// evaluation order, so parents always precede children and the backward
// sweep is a reverse scan. Leaves made from frozen parameters or constants
// never allocate a gradient.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "frappe/numerics/ops.hpp"
#include "frappe/numerics/tensor.hpp"

namespace frappe {

// A trainable array plus the gradient accumulated by Tape::backward.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool frozen = false;
  // Multiplies the optimizer's learning rate (encoder group uses 0.1).
  double lr_scale = 1.0;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v, double scale = 1.0)
      : name(std::move(n)), value(std::move(v)), lr_scale(scale) {}

  void zero_grad() { grad = Tensor<T>(); }
};

template <class T>
class Tape;

template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

template <class T>
class Tape {
 public:
  using value_type = T;
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), {}, nullptr, false); }

  // Leaf bound to a parameter; frozen parameters become constants.
  Var<T> parameter(Parameter<T>& p) {
    Var<T> v = push(p.value, {}, nullptr, !p.frozen);
    if (!p.frozen) nodes_[v.id].sink = &p;
    return v;
  }

  // Leaf that collects its own gradient (inputs in gradient checks).
  Var<T> variable(Tensor<T> value) { return push(std::move(value), {}, nullptr, true); }

  Var<T> push(Tensor<T> value, std::vector<std::size_t> parents, BackwardFn backward, bool requires_grad) {
    for (std::size_t p : parents) {
      if (p >= nodes_.size()) throw InternalError("tape: parent node " + std::to_string(p) + " does not exist");
      requires_grad = requires_grad || nodes_[p].requires_grad;
    }
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<T>{this, nodes_.size() - 1};
  }

  const Tensor<T>& value(Var<T> v) const { return node(v).value; }
  // Null when the node received no gradient.
  const Tensor<T>* grad(Var<T> v) const {
    const Node& n = node(v);
    return n.grad.empty() ? nullptr : &n.grad;
  }
  bool requires_grad(Var<T> v) const { return node(v).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Parent gradient buffer, allocated on first use; null if the parent
  // does not participate in differentiation.
  Tensor<T>* grad_slot(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return &n.grad;
  }
  const Tensor<T>& value_at(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor<T>& grad_at(std::size_t id) const { return nodes_.at(id).grad; }

  // Seeds d(loss)/d(loss) = 1 and sweeps in reverse; parameter leaves add
  // their gradient into Parameter::grad.
  void backward(Var<T> loss) {
    check_owner(loss);
    Node& root = nodes_[loss.id];
    if (root.value.size() != 1) {
      throw InternalError("backward: loss must be scalar, got shape " + shape_string(root.value.shape()));
    }
    if (!root.requires_grad) return;
    root.grad = Tensor<T>(root.value.shape(), T(1));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty()) continue;
      for (std::size_t p : n.parents) {
        if (p >= i) throw InternalError("backward: cycle through node " + std::to_string(i));
      }
      if (n.backward) n.backward(*this, i);
      if (n.sink) {
        Parameter<T>& p = *n.sink;
        if (p.grad.empty()) p.grad = Tensor<T>(p.value.shape());
        for (std::size_t k = 0; k < n.grad.size(); ++k) p.grad[k] += n.grad[k];
      }
    }
  }

  // True when no node outside the differentiable set holds a gradient.
  bool frozen_leaves_clean() const {
    for (const Node& n : nodes_) {
      if (!n.requires_grad && !n.grad.empty()) return false;
    }
    return true;
  }

  void check_owner(Var<T> v) const {
    if (v.tape != this || v.id >= nodes_.size()) throw InternalError("tape: variable belongs to another tape");
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter<T>* sink = nullptr;
    bool requires_grad = false;
  };

  const Node& node(Var<T> v) const {
    check_owner(v);
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
};

// Differentiable operations. Each records its inputs' ids and a closure
// that routes the output gradient to them.
namespace ad {

namespace detail {

template <class T>
Tape<T>& same_tape(std::initializer_list<Var<T>> vars) {
  Tape<T>* t = vars.begin()->tape;
  for (const auto& v : vars) {
    if (v.tape != t || t == nullptr) throw InternalError("ad: operands live on different tapes");
    t->check_owner(v);
  }
  return *t;
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

}  // namespace detail

template <class T>
Var<T> conv_strided(Var<T> x, Var<T> w, Var<T> b, std::size_t stride) {
  Tape<T>& t = detail::same_tape({x, w, b});
  Tensor<T> y = ops::conv_strided(x.value(), w.value(), b.value(), stride);
  return t.push(std::move(y), {x.id, w.id, b.id},
                [xi = x.id, wi = w.id, bi = b.id, stride](Tape<T>& tp, std::size_t self) {
                  ops::conv_strided_backward(tp.value_at(xi), tp.value_at(wi), stride, tp.grad_at(self),
                                             tp.grad_slot(xi), tp.grad_slot(wi), tp.grad_slot(bi));
                },
                false);
}

template <class T>
Var<T> conv_transposed(Var<T> x, Var<T> w, Var<T> b, std::size_t stride) {
  Tape<T>& t = detail::same_tape({x, w, b});
  Tensor<T> y = ops::conv_transposed(x.value(), w.value(), b.value(), stride);
  return t.push(std::move(y), {x.id, w.id, b.id},
                [xi = x.id, wi = w.id, bi = b.id, stride](Tape<T>& tp, std::size_t self) {
                  ops::conv_transposed_backward(tp.value_at(xi), tp.value_at(wi), stride, tp.grad_at(self),
                                                tp.grad_slot(xi), tp.grad_slot(wi), tp.grad_slot(bi));
                },
                false);
}

template <class T>
Var<T> conv3(Var<T> x, Var<T> w, Var<T> b) {
  Tape<T>& t = detail::same_tape({x, w, b});
  Tensor<T> y = ops::conv3(x.value(), w.value(), b.value());
  return t.push(std::move(y), {x.id, w.id, b.id},
                [xi = x.id, wi = w.id, bi = b.id](Tape<T>& tp, std::size_t self) {
                  ops::conv3_backward(tp.value_at(xi), tp.value_at(wi), tp.grad_at(self), tp.grad_slot(xi),
                                      tp.grad_slot(wi), tp.grad_slot(bi));
                },
                false);
}

template <class T>
Var<T> depthwise3(Var<T> x, Var<T> w, Var<T> b) {
  Tape<T>& t = detail::same_tape({x, w, b});
  Tensor<T> y = ops::depthwise3(x.value(), w.value(), b.value());
  return t.push(std::move(y), {x.id, w.id, b.id},
                [xi = x.id, wi = w.id, bi = b.id](Tape<T>& tp, std::size_t self) {
                  ops::depthwise3_backward(tp.value_at(xi), tp.value_at(wi), tp.grad_at(self), tp.grad_slot(xi),
                                           tp.grad_slot(wi), tp.grad_slot(bi));
                },
                false);
}

template <class T>
Var<T> pointwise(Var<T> x, Var<T> w, Var<T> b) {
  Tape<T>& t = detail::same_tape({x, w, b});
  Tensor<T> y = ops::pointwise(x.value(), w.value(), b.value());
  return t.push(std::move(y), {x.id, w.id, b.id},
                [xi = x.id, wi = w.id, bi = b.id](Tape<T>& tp, std::size_t self) {
                  ops::pointwise_backward(tp.value_at(xi), tp.value_at(wi), tp.grad_at(self), tp.grad_slot(xi),
                                          tp.grad_slot(wi), tp.grad_slot(bi));
                },
                false);
}

template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double epsilon = ops::kLayerNormEpsilon) {
  Tape<T>& t = detail::same_tape({x, gamma, beta});
  auto fwd = std::make_shared<ops::LayerNormResult<T>>(
      ops::layer_norm(x.value(), gamma.value(), beta.value(), epsilon));
  Tensor<T> y = fwd->output;
  return t.push(std::move(y), {x.id, gamma.id, beta.id},
                [fwd, xi = x.id, gi = gamma.id, bi = beta.id](Tape<T>& tp, std::size_t self) {
                  ops::layer_norm_backward(*fwd, tp.value_at(gi), tp.grad_at(self), tp.grad_slot(xi),
                                           tp.grad_slot(gi), tp.grad_slot(bi));
                },
                false);
}

template <class T>
Var<T> gelu(Var<T> x) {
  Tape<T>& t = *x.tape;
  return t.push(ops::gelu(x.value()), {x.id},
                [xi = x.id](Tape<T>& tp, std::size_t self) {
                  Tensor<T>* gx = tp.grad_slot(xi);
                  const Tensor<T>& xv = tp.value_at(xi);
                  const Tensor<T>& g = tp.grad_at(self);
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    (*gx)[i] += static_cast<T>(g[i] * ops::gelu_derivative(xv[i]));
                  }
                },
                false);
}

// Clamp to [-1, 1]; the gradient passes only strictly inside.
template <class T>
Var<T> hardtanh(Var<T> x) {
  Tape<T>& t = *x.tape;
  return t.push(ops::hardtanh(x.value()), {x.id},
                [xi = x.id](Tape<T>& tp, std::size_t self) {
                  Tensor<T>* gx = tp.grad_slot(xi);
                  const Tensor<T>& xv = tp.value_at(xi);
                  const Tensor<T>& g = tp.grad_at(self);
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    if (xv[i] > T(-1) && xv[i] < T(1)) (*gx)[i] += g[i];
                  }
                },
                false);
}

template <class T>
Var<T> compand(Var<T> u, Var<T> sigma) {
  Tape<T>& t = detail::same_tape({u, sigma});
  return t.push(ops::compand(u.value(), sigma.value()), {u.id, sigma.id},
                [ui = u.id, si = sigma.id](Tape<T>& tp, std::size_t self) {
                  ops::compand_backward(tp.value_at(ui), tp.value_at(si), tp.grad_at(self), tp.grad_slot(ui),
                                        tp.grad_slot(si));
                },
                false);
}

template <class T>
Var<T> channel_scale(Var<T> x, Var<T> scale) {
  Tape<T>& t = detail::same_tape({x, scale});
  return t.push(ops::channel_scale(x.value(), scale.value()), {x.id, scale.id},
                [xi = x.id, si = scale.id](Tape<T>& tp, std::size_t self) {
                  const Tensor<T>& xv = tp.value_at(xi);
                  const Tensor<T>& sv = tp.value_at(si);
                  const Tensor<T>& g = tp.grad_at(self);
                  const std::size_t ch = xv.channels(), n = xv.sites();
                  Tensor<T>* gx = tp.grad_slot(xi);
                  Tensor<T>* gs = tp.grad_slot(si);
                  for (std::size_t c = 0; c < ch; ++c) {
                    ops::Acc acc = 0;
                    for (std::size_t s = 0; s < n; ++s) {
                      if (gx) (*gx)[c * n + s] += g[c * n + s] * sv[c];
                      acc += static_cast<ops::Acc>(g[c * n + s]) * xv[c * n + s];
                    }
                    if (gs) (*gs)[c] += static_cast<T>(acc);
                  }
                },
                false);
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape({a, b});
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return t.push(std::move(y), {a.id, b.id},
                [ai = a.id, bi = b.id](Tape<T>& tp, std::size_t self) {
                  const Tensor<T>& g = tp.grad_at(self);
                  if (Tensor<T>* ga = tp.grad_slot(ai)) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                  }
                  if (Tensor<T>* gb = tp.grad_slot(bi)) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
                  }
                },
                false);
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape({a, b});
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return t.push(std::move(y), {a.id, b.id},
                [ai = a.id, bi = b.id](Tape<T>& tp, std::size_t self) {
                  const Tensor<T>& g = tp.grad_at(self);
                  if (Tensor<T>* ga = tp.grad_slot(ai)) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                  }
                  if (Tensor<T>* gb = tp.grad_slot(bi)) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
                  }
                },
                false);
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& t = detail::same_tape({a, b});
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return t.push(std::move(y), {a.id, b.id},
                [ai = a.id, bi = b.id](Tape<T>& tp, std::size_t self) {
                  const Tensor<T>& g = tp.grad_at(self);
                  const Tensor<T>& av = tp.value_at(ai);
                  const Tensor<T>& bv = tp.value_at(bi);
                  if (Tensor<T>* ga = tp.grad_slot(ai)) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
                  }
                  if (Tensor<T>* gb = tp.grad_slot(bi)) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
                  }
                },
                false);
}

// a * c for a constant c.
template <class T>
Var<T> scale(Var<T> a, double c) {
  Tape<T>& t = *a.tape;
  Tensor<T> y = a.value();
  for (auto& v : y.values()) v = static_cast<T>(v * c);
  return t.push(std::move(y), {a.id},
                [ai = a.id, c](Tape<T>& tp, std::size_t self) {
                  const Tensor<T>& g = tp.grad_at(self);
                  Tensor<T>* ga = tp.grad_slot(ai);
                  for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += static_cast<T>(g[i] * c);
                },
                false);
}

template <class T>
Var<T> square(Var<T> a) {
  Tape<T>& t = *a.tape;
  Tensor<T> y = a.value();
  for (auto& v : y.values()) v = v * v;
  return t.push(std::move(y), {a.id},
                [ai = a.id](Tape<T>& tp, std::size_t self) {
                  const Tensor<T>& g = tp.grad_at(self);
                  const Tensor<T>& av = tp.value_at(ai);
                  Tensor<T>* ga = tp.grad_slot(ai);
                  for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += T(2) * av[i] * g[i];
                },
                false);
}

template <class T>
Var<T> sum(Var<T> a) {
  Tape<T>& t = *a.tape;
  ops::Acc acc = 0;
  for (T v : a.value().values()) acc += v;
  return t.push(Tensor<T>::scalar(static_cast<T>(acc)), {a.id},
                [ai = a.id](Tape<T>& tp, std::size_t self) {
                  const T g = tp.grad_at(self)[0];
                  Tensor<T>* ga = tp.grad_slot(ai);
                  for (auto& v : ga->values()) v += g;
                },
                false);
}

template <class T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

// Population variance over every element.
template <class T>
Var<T> variance(Var<T> a) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& av = a.value();
  const double n = static_cast<double>(av.size());
  ops::Acc mu = 0;
  for (T v : av.values()) mu += v;
  mu /= n;
  ops::Acc var = 0;
  for (T v : av.values()) var += (v - mu) * (v - mu);
  var /= n;
  return t.push(Tensor<T>::scalar(static_cast<T>(var)), {a.id},
                [ai = a.id, mu, n](Tape<T>& tp, std::size_t self) {
                  const ops::Acc g = tp.grad_at(self)[0];
                  const Tensor<T>& v = tp.value_at(ai);
                  Tensor<T>* ga = tp.grad_slot(ai);
                  for (std::size_t i = 0; i < v.size(); ++i) (*ga)[i] += static_cast<T>(g * 2.0 * (v[i] - mu) / n);
                },
                false);
}

// Standard deviation of every element, floored at `floor`.
template <class T>
Var<T> stddev(Var<T> a, double floor) {
  Tape<T>& t = *a.tape;
  Var<T> var = variance(a);
  const double v = var.value()[0];
  const double sd = std::sqrt(std::max(v, 0.0));
  const bool floored = sd < floor;
  return t.push(Tensor<T>::scalar(static_cast<T>(floored ? floor : sd)), {var.id},
                [vi = var.id, sd, floored](Tape<T>& tp, std::size_t self) {
                  if (floored) return;
                  const double g = tp.grad_at(self)[0];
                  (*tp.grad_slot(vi))[0] += static_cast<T>(g * 0.5 / sd);
                },
                false);
}

// log_base(max(a, floor)) for a scalar a; zero gradient when floored.
template <class T>
Var<T> log_floor(Var<T> a, double base, double floor) {
  Tape<T>& t = *a.tape;
  const double v = a.value().item();
  const bool floored = !(v > floor);
  const double arg = floored ? floor : v;
  const double lb = std::log(base);
  return t.push(Tensor<T>::scalar(static_cast<T>(std::log(arg) / lb)), {a.id},
                [ai = a.id, arg, lb, floored](Tape<T>& tp, std::size_t self) {
                  if (floored) return;
                  const double g = tp.grad_at(self)[0];
                  (*tp.grad_slot(ai))[0] += static_cast<T>(g / (arg * lb));
                },
                false);
}

template <class T>
Var<T> space_to_depth(Var<T> x, std::size_t factor) {
  Tape<T>& t = *x.tape;
  return t.push(ops::space_to_depth(x.value(), factor), {x.id},
                [xi = x.id, factor](Tape<T>& tp, std::size_t self) {
                  Tensor<T> back = ops::depth_to_space(tp.grad_at(self), factor);
                  Tensor<T>* gx = tp.grad_slot(xi);
                  for (std::size_t i = 0; i < back.size(); ++i) (*gx)[i] += back[i];
                },
                false);
}

template <class T>
Var<T> upsample_nearest(Var<T> x, std::size_t factor) {
  Tape<T>& t = *x.tape;
  return t.push(ops::upsample_nearest(x.value(), factor), {x.id},
                [xi = x.id, factor](Tape<T>& tp, std::size_t self) {
                  Tensor<T> back = ops::block_sum(tp.grad_at(self), factor);
                  Tensor<T>* gx = tp.grad_slot(xi);
                  for (std::size_t i = 0; i < back.size(); ++i) (*gx)[i] += back[i];
                },
                false);
}

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: nothing to concatenate");
  Tape<T>& t = *parts.front().tape;
  std::vector<const Tensor<T>*> ptrs;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    t.check_owner(p);
    ptrs.push_back(&p.value());
    ids.push_back(p.id);
  }
  Tensor<T> y = ops::concat_channels<T>(ptrs);
  return t.push(std::move(y), ids,
                [ids](Tape<T>& tp, std::size_t self) {
                  const Tensor<T>& g = tp.grad_at(self);
                  std::size_t at = 0;
                  for (std::size_t id : ids) {
                    const std::size_t len = tp.value_at(id).size();
                    if (Tensor<T>* gp = tp.grad_slot(id)) {
                      for (std::size_t i = 0; i < len; ++i) (*gp)[i] += g[at + i];
                    }
                    at += len;
                  }
                },
                false);
}

template <class T>
Var<T> detach(Var<T> x) {
  return x.tape->constant(x.value());
}

}  // namespace ad
}  // namespace frappe
