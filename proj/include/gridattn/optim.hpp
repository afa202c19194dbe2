// Copyright 2026 The gridattn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Adam and the restarting exponential learning-rate schedule.

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "gridattn/error.hpp"
#include "gridattn/extractor.hpp"

namespace gridattn {

struct ScheduleConfig {
  double lr0 = 1e-3;
  double decay = 0.95;
  double restart_lr = 1e-4;
  std::size_t restart_period = 50;

  void validate() const {
    if (!(lr0 > 0.0) || !(restart_lr > 0.0)) throw ConfigError("schedule: learning rates must be positive");
    if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("schedule: decay must be in (0, 1]");
    if (restart_period == 0) throw ConfigError("schedule: restart_period must be positive");
  }
};

/// Learning rate for a 0-based epoch. The first period decays from lr0 by
/// `decay` per epoch; every later period restarts at restart_lr and decays
/// the same way.
inline double lr_at(std::size_t epoch, const ScheduleConfig& cfg) {
  if (epoch < cfg.restart_period) return cfg.lr0 * std::pow(cfg.decay, static_cast<double>(epoch));
  return cfg.restart_lr * std::pow(cfg.decay, static_cast<double>(epoch % cfg.restart_period));
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected Adam update; `step` counts from 1.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
                      double lr, std::size_t step, const AdamConfig& cfg = {}) {
  if (grads.size() != params.size()) throw DimensionError("adam_step: gradient size mismatch");
  if (step == 0) throw std::invalid_argument("adam_step: step counts from 1");
  if (moments.m.empty()) moments.m.assign(params.size(), 0.0);
  if (moments.v.empty()) moments.v.assign(params.size(), 0.0);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    moments.m[i] = cfg.beta1 * moments.m[i] + (1.0 - cfg.beta1) * g;
    moments.v[i] = cfg.beta2 * moments.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = moments.m[i] / c1;
    const double v_hat = moments.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

// Adam over a model's named parameters. Tensors that do not require
// gradients (frozen stages) are never touched.
class Adam {
 public:
  explicit Adam(std::vector<NamedTensor> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg), moments_(params_.size()) {}

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  void step(double lr) {
    ++steps_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor& t = params_[i].tensor;
      if (!t.requires_grad()) continue;
      std::vector<double> zeros;
      std::span<const double> grad = t.grad();
      if (!t.has_grad()) {
        zeros.assign(t.numel(), 0.0);
        grad = zeros;
      }
      adam_step(t.mutable_data(), grad, moments_[i], lr, steps_, cfg_);
    }
  }

  std::size_t steps() const { return steps_; }
  void set_steps(std::size_t steps) { steps_ = steps; }
  const std::vector<NamedTensor>& params() const { return params_; }
  std::vector<AdamMoments>& moments() { return moments_; }
  const std::vector<AdamMoments>& moments() const { return moments_; }

 private:
  std::vector<NamedTensor> params_;
  AdamConfig cfg_;
  std::vector<AdamMoments> moments_;
  std::size_t steps_ = 0;
};

}  // namespace gridattn
