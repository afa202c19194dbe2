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

// Whole-image models: the grid attention network and the crop classifier
// used by the sliding-window baseline. Both expose their weights as an
// ordered list of named tensors, which is what checkpoints and the
// optimizer work with.

#pragma once

#include <string>
#include <vector>

#include "gridattn/attention.hpp"
#include "gridattn/extractor.hpp"

namespace gridattn {

class AttentionModel {
 public:
  AttentionModel() = default;

  AttentionModel(const ExtractorConfig& extractor, const AttentionConfig& attention, std::uint64_t seed) {
    Rng rng = make_rng(seed, Stream::kInit);
    extractor_ = FeatureExtractor(extractor, rng);
    attention_ = AttentionModule(attention, extractor.feature_size(), rng);
  }

  const FeatureExtractor& extractor() const { return extractor_; }
  const AttentionModule& attention() const { return attention_; }
  AttentionModule& attention() { return attention_; }

  // `cells` must already be normalized.
  Classification forward(const CellGrid& cells, Mode mode, Rng* dropout_rng = nullptr) const {
    FeatureGrid features = extractor_.extract(cells);
    return classify(features.u, attention_, mode, dropout_rng);
  }

  std::vector<NamedTensor> parameters() const {
    auto out = extractor_.parameters();
    for (auto& p : attention_.parameters()) out.push_back(std::move(p));
    return out;
  }

 private:
  FeatureExtractor extractor_;
  AttentionModule attention_;
};

// Extractor CNN with a linear head, classifying one crop at a time.
class CropClassifier {
 public:
  CropClassifier() = default;

  CropClassifier(const ExtractorConfig& extractor, std::size_t num_classes, std::uint64_t seed) {
    Rng rng = make_rng(seed, Stream::kInit);
    extractor_ = FeatureExtractor(extractor, rng);
    const std::size_t k = extractor.feature_size();
    head_ = LinearLayer{Tensor::zeros({num_classes, k}, true), Tensor::zeros({num_classes}, true)};
    glorot_uniform(head_.weight, k, num_classes, rng);
  }

  const FeatureExtractor& extractor() const { return extractor_; }

  /// [n, 3, s, s] crops -> one logit vector per crop.
  std::vector<Tensor> forward(const Tensor& crops) const {
    Tensor features = extractor_.forward(crops);
    const std::size_t n = features.dim(0);
    std::vector<Tensor> logits;
    logits.reserve(n);
    for (std::size_t i = 0; i < n; ++i) logits.push_back(linear(row(features, i), head_.weight, head_.bias));
    return logits;
  }

  std::vector<NamedTensor> parameters() const {
    auto out = extractor_.parameters();
    out.push_back({"head.weight", head_.weight});
    out.push_back({"head.bias", head_.bias});
    return out;
  }

 private:
  FeatureExtractor extractor_;
  LinearLayer head_;
};

}  // namespace gridattn
