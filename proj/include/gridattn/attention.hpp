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
 * @file attention.hpp
 * @brief Grid attention over a feature map U of shape [k, r, c].
 *
 * Each head owns one k x d x d filter. Sliding it over U with zero padding
 * (0, (d-1)/2, (d-1)/2) yields a value grid V of exactly r x c scores, so a
 * cell's score depends on its own features and those of its neighbours.
 * The softmax of V over the whole grid is the attention map alpha, and the
 * head's global feature is z[n] = sum_{i,j} alpha[i,j] * U[n,i,j]. The z of
 * every head are concatenated in head order, passed through dropout (train
 * mode only), and classified by a small fully connected network.
 *
 * Nothing here depends on r or c, so one module serves any grid size.
 */

#pragma once

#include <string>
#include <vector>

#include "gridattn/classes.hpp"
#include "gridattn/extractor.hpp"
#include "gridattn/ops.hpp"
#include "gridattn/rng.hpp"

namespace gridattn {

struct AttentionConfig {
  std::size_t heads = 4;
  std::size_t kernel = 3;
  // Hidden width of the classifier; 0 means a single linear layer.
  std::size_t hidden = 16;
  std::size_t num_classes = kNumClasses;
  double dropout = 0.5;

  void validate() const {
    if (heads == 0) throw ConfigError("attention: heads must be at least 1");
    if (kernel == 0 || kernel % 2 == 0) throw ConfigError("attention: kernel must be odd");
    if (num_classes < 2) throw ConfigError("attention: need at least two classes");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("attention: dropout must be in [0, 1)");
  }

  static AttentionConfig full_scale() {
    AttentionConfig config;
    config.heads = 64;
    config.hidden = 128;
    return config;
  }
};

struct AttentionHead {
  Tensor kernel;  // [1, k, d, d]
  Tensor bias;    // [1]

  std::size_t depth() const { return kernel.dim(1); }
  std::size_t extent() const { return kernel.dim(2); }
};

struct LinearLayer {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

/// Value grid V = bias + (kernel * U) with same-size zero padding; [r, c].
inline Tensor value_grid(const Tensor& u, const AttentionHead& head) {
  detail::require_shape(u, 3, "value_grid features");
  if (head.depth() != u.dim(0)) {
    throw DimensionError("value_grid: head depth " + std::to_string(head.depth()) +
                         " does not match feature depth " + std::to_string(u.dim(0)));
  }
  const std::size_t pad = head.extent() / 2;
  Tensor v = conv2d(u, head.kernel, head.bias, 1, {pad, pad});
  return reshape(v, {u.dim(1), u.dim(2)});
}

struct Attended {
  Tensor alpha;  // [r, c], sums to 1
  Tensor z;      // [k]
};

inline Attended attend(const Tensor& u, const AttentionHead& head) {
  Tensor alpha = softmax2d(value_grid(u, head));
  Tensor z = attention_pool(alpha, u);
  return {alpha, z};
}

struct Classification {
  Tensor logits;
  std::vector<Tensor> maps;  // one attention map per head
};

class AttentionModule {
 public:
  AttentionModule() = default;

  AttentionModule(AttentionConfig config, std::size_t feature_size, Rng& rng)
      : config_(config), feature_size_(feature_size) {
    config_.validate();
    const std::size_t d = config_.kernel;
    for (std::size_t h = 0; h < config_.heads; ++h) {
      AttentionHead head{Tensor::zeros({1, feature_size, d, d}, true), Tensor::zeros({1}, true)};
      msra_normal(head.kernel, feature_size * d * d, rng);
      heads_.push_back(head);
    }
    std::size_t in = config_.heads * feature_size;
    std::vector<std::size_t> widths;
    if (config_.hidden > 0) widths.push_back(config_.hidden);
    widths.push_back(config_.num_classes);
    for (std::size_t out : widths) {
      LinearLayer layer{Tensor::zeros({out, in}, true), Tensor::zeros({out}, true)};
      glorot_uniform(layer.weight, in, out, rng);
      layers_.push_back(layer);
      in = out;
    }
  }

  const AttentionConfig& config() const { return config_; }
  std::size_t feature_size() const { return feature_size_; }
  const std::vector<AttentionHead>& heads() const { return heads_; }
  std::vector<AttentionHead>& heads() { return heads_; }
  const std::vector<LinearLayer>& classifier() const { return layers_; }
  std::vector<LinearLayer>& classifier() { return layers_; }

  // Fully connected layers with ReLU between them.
  Tensor classify_features(const Tensor& features) const {
    Tensor x = features;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      x = linear(x, layers_[l].weight, layers_[l].bias);
      if (l + 1 < layers_.size()) x = relu(x);
    }
    return x;
  }

  std::vector<NamedTensor> parameters() const {
    std::vector<NamedTensor> out;
    for (std::size_t h = 0; h < heads_.size(); ++h) {
      out.push_back({"attention.head" + std::to_string(h) + ".kernel", heads_[h].kernel});
      out.push_back({"attention.head" + std::to_string(h) + ".bias", heads_[h].bias});
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      out.push_back({"classifier.layer" + std::to_string(l) + ".weight", layers_[l].weight});
      out.push_back({"classifier.layer" + std::to_string(l) + ".bias", layers_[l].bias});
    }
    return out;
  }

 private:
  AttentionConfig config_;
  std::size_t feature_size_ = 0;
  std::vector<AttentionHead> heads_;
  std::vector<LinearLayer> layers_;
};

/// Logits over the classes plus each head's attention map. `dropout_rng` is
/// only drawn from in train mode.
inline Classification classify(const Tensor& u, const AttentionModule& module, Mode mode,
                               Rng* dropout_rng = nullptr) {
  if (module.heads().empty()) throw std::logic_error("attention module used before initialization");
  Classification out;
  std::vector<Tensor> features;
  for (const AttentionHead& head : module.heads()) {
    Attended a = attend(u, head);
    out.maps.push_back(a.alpha);
    features.push_back(a.z);
  }
  Tensor z = concat(features);
  if (mode == Mode::kTrain && module.config().dropout > 0.0) {
    if (dropout_rng == nullptr) throw std::logic_error("classify: train mode needs a dropout stream");
    z = dropout(z, module.config().dropout, mode, *dropout_rng);
  }
  out.logits = module.classify_features(z);
  return out;
}

}  // namespace gridattn
