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

// Small shared fixtures for unit and acceptance tests.

#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gradcheck.hpp"
#include "gridattn/model.hpp"

namespace gridattn::testing {

inline CellGrid random_cells(std::size_t rows, std::size_t cols, std::size_t cell, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Image image(rows * cell, cols * cell, 3);
  for (double& v : image.pixels) v = dist(rng);
  return tile(image, cell);
}

// k = 4 features, m = 2 heads of 3x3, four classes.
inline AttentionModel tiny_attention_model(std::uint64_t seed) {
  ExtractorConfig extractor;
  extractor.stages = {{3, 3, 2}, {4, 3, 2}};
  AttentionConfig attention;
  attention.heads = 2;
  attention.kernel = 3;
  attention.hidden = 5;
  return AttentionModel(extractor, attention, seed);
}

// Full forward + cross-entropy on a 2x2 grid, checked against central
// differences for every parameter. Dropout runs with a reseeded stream so
// every evaluation sees the same mask.
inline GradCheckResult full_model_grad_check(std::uint64_t seed) {
  AttentionModel model = tiny_attention_model(seed);
  const CellGrid cells = random_cells(2, 2, 8, seed + 100);
  auto loss = [&] {
    Rng dropout_rng = make_rng(seed, Stream::kDropout);
    return cross_entropy(model.forward(cells, Mode::kTrain, &dropout_rng).logits, 2);
  };
  std::vector<std::pair<std::string, Tensor>> params;
  for (auto& p : model.parameters()) params.emplace_back(p.name, p.tensor);
  return grad_check(loss, params, 1e-4);
}

}  // namespace gridattn::testing
