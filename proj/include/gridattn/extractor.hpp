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

/**
 * @file extractor.hpp
 * @brief Shared-weight per-cell CNN producing the grid feature map U.
 *
 * Every cell of a CellGrid goes through the same stack of strided
 * convolutions (each followed by ReLU) and a global average pool, giving a
 * k-vector per cell. The vectors are laid back out on the grid as a
 * [k, rows, cols] tensor that stays connected to the extractor weights.
 */

#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridattn/ops.hpp"
#include "gridattn/rng.hpp"
#include "gridattn/tiler.hpp"

namespace gridattn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct ConvStage {
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 2;

  bool operator==(const ConvStage&) const = default;
};

struct ExtractorConfig {
  std::size_t in_channels = 3;
  std::vector<ConvStage> stages{{16, 3, 2}, {32, 3, 2}, {32, 3, 2}};
  // Leading stages whose weights stay fixed during training.
  std::size_t freeze_depth = 0;

  std::size_t feature_size() const { return stages.empty() ? 0 : stages.back().out_channels; }

  void validate() const {
    if (stages.empty()) throw ConfigError("extractor: at least one conv stage is required");
    for (const ConvStage& s : stages) {
      if (s.out_channels == 0 || s.kernel == 0 || s.stride == 0) {
        throw ConfigError("extractor: stage extents must be positive");
      }
    }
    if (freeze_depth > stages.size()) {
      throw ConfigError("extractor: freeze_depth exceeds the number of stages");
    }
  }

  // 16 -> 32 -> k channels, 3x3 stride-2 kernels.
  static ExtractorConfig desk(std::size_t k = 32) {
    ExtractorConfig config;
    config.stages = {{16, 3, 2}, {32, 3, 2}, {k, 3, 2}};
    return config;
  }

  // Deeper 512-feature stack with all but the last stage frozen.
  static ExtractorConfig full_scale() {
    ExtractorConfig config;
    config.stages = {{64, 3, 2}, {128, 3, 2}, {256, 3, 2}, {512, 3, 2}};
    config.freeze_depth = 3;
    return config;
  }
};

// MSRA / He normal: N(0, sqrt(2 / fan_in)).
inline void msra_normal(Tensor& t, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (double& v : t.mutable_data()) v = dist(rng);
}

// Glorot / Xavier uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
inline void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.mutable_data()) v = dist(rng);
}

struct FeatureGrid {
  Tensor u;  // [k, rows, cols]
  std::vector<std::uint8_t> tissue_mask;

  std::size_t depth() const { return u.dim(0); }
  std::size_t rows() const { return u.dim(1); }
  std::size_t cols() const { return u.dim(2); }
};

class FeatureExtractor {
 public:
  FeatureExtractor() = default;

  FeatureExtractor(ExtractorConfig config, Rng& rng) : config_(std::move(config)) {
    config_.validate();
    std::size_t cin = config_.in_channels;
    for (std::size_t s = 0; s < config_.stages.size(); ++s) {
      const ConvStage& stage = config_.stages[s];
      const bool trainable = s >= config_.freeze_depth;
      Tensor kernel = Tensor::zeros({stage.out_channels, cin, stage.kernel, stage.kernel}, trainable);
      msra_normal(kernel, cin * stage.kernel * stage.kernel, rng);
      kernels_.push_back(kernel);
      biases_.push_back(Tensor::zeros({stage.out_channels}, trainable));
      cin = stage.out_channels;
    }
  }

  bool initialized() const { return !kernels_.empty(); }
  const ExtractorConfig& config() const { return config_; }
  std::size_t feature_size() const { return config_.feature_size(); }

  /// [n, cin, s, s] cell batch -> [n, k] features.
  Tensor forward(const Tensor& batch) const {
    if (!initialized()) throw std::logic_error("feature extractor used before initialization");
    Tensor x = batch;
    for (std::size_t s = 0; s < kernels_.size(); ++s) {
      const ConvStage& stage = config_.stages[s];
      const std::size_t pad = stage.kernel / 2;
      x = relu(conv2d(x, kernels_[s], biases_[s], stage.stride, {pad, pad}));
    }
    return global_avg_pool(x);
  }

  FeatureGrid extract(const CellGrid& grid) const {
    Tensor features = forward(grid.as_batch());
    Tensor u = reshape(transpose2d(features), {feature_size(), grid.rows, grid.cols});
    return FeatureGrid{u, grid.tissue_mask};
  }

  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    for (std::size_t s = 0; s < kernels_.size(); ++s) {
      out.push_back({"extractor.stage" + std::to_string(s) + ".weight", kernels_[s]});
      out.push_back({"extractor.stage" + std::to_string(s) + ".bias", biases_[s]});
    }
    return out;
  }

 private:
  ExtractorConfig config_;
  std::vector<Tensor> kernels_;
  std::vector<Tensor> biases_;
};

inline FeatureExtractor init_extractor(const ExtractorConfig& config, std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::kInit);
  return FeatureExtractor(config, rng);
}

inline FeatureGrid extract(const CellGrid& grid, const FeatureExtractor& extractor) {
  return extractor.extract(grid);
}

}  // namespace gridattn
