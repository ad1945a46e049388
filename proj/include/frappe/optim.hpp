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

#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "frappe/error.hpp"
#include "frappe/numerics/tape.hpp"

namespace frappe::optim {

// Learning rate at `step` of `total`: linear warmup over the first
// warmup_fraction of steps, then cosine decay towards zero.
inline double cosine_ramp(std::size_t step, std::size_t total, double peak, double warmup_fraction) {
  if (total == 0) return 0.0;
  const std::size_t warm = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(warmup_fraction * total)));
  if (step < warm) return peak * double(step + 1) / double(warm);
  if (total <= warm) return peak;
  const double t = double(step - warm) / double(total - warm);
  return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Applies one update with base rate `lr` (scaled per parameter by
  // lr_scale) and clears the gradients. The parameter list must keep the
  // same order across calls.
  virtual void step(const std::vector<Parameter<float>*>& params, double lr) = 0;
};

class Adam : public Optimizer {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8) : b1_(beta1), b2_(beta2), eps_(epsilon) {}

  void step(const std::vector<Parameter<float>*>& params, double lr) override {
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->value.size(), 0.0);
        v_.emplace_back(p->value.size(), 0.0);
      }
    }
    if (m_.size() != params.size()) throw InternalError("adam: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, double(t_)), c2 = 1.0 - std::pow(b2_, double(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Parameter<float>& p = *params[k];
      if (p.frozen || p.grad.empty()) {
        p.zero_grad();
        continue;
      }
      if (m_[k].size() != p.value.size()) throw InternalError("adam: parameter " + p.name + " changed size");
      const double rate = lr * p.lr_scale;
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m_[k][i] = b1_ * m_[k][i] + (1 - b1_) * g;
        v_[k][i] = b2_ * v_[k][i] + (1 - b2_) * g * g;
        const double mhat = m_[k][i] / c1, vhat = v_[k][i] / c2;
        p.value[i] = static_cast<float>(p.value[i] - rate * mhat / (std::sqrt(vhat) + eps_));
      }
      p.zero_grad();
    }
  }

  std::size_t steps() const { return t_; }

 private:
  double b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace frappe::optim
