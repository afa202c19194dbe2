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

#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "gridattn/extractor.hpp"

namespace gridattn {
namespace {

ExtractorConfig small_config(std::size_t k = 6) {
  ExtractorConfig config;
  config.stages = {{4, 3, 2}, {k, 3, 2}};
  return config;
}

CellGrid random_grid(std::size_t rows, std::size_t cols, std::size_t cell, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Image image(rows * cell, cols * cell, 3);
  for (double& v : image.pixels) v = dist(rng);
  return tile(image, cell);
}

TEST(ExtractorConfigTest, Validation) {
  EXPECT_NO_THROW(ExtractorConfig::desk().validate());
  EXPECT_EQ(ExtractorConfig::desk(32).feature_size(), 32u);
  EXPECT_EQ(ExtractorConfig::full_scale().feature_size(), 512u);
  ExtractorConfig bad = ExtractorConfig::desk();
  bad.freeze_depth = 4;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ExtractorTest, UninitializedIsContractViolation) {
  FeatureExtractor extractor;
  std::mt19937_64 rng(1);
  EXPECT_THROW(extractor.extract(random_grid(1, 1, 8, rng)), std::logic_error);
}

TEST(ExtractorTest, SingleCellMatchesCnnOutput) {
  std::mt19937_64 rng(2);
  FeatureExtractor extractor = init_extractor(small_config(), 7);
  CellGrid grid = random_grid(1, 1, 16, rng);
  FeatureGrid features = extract(grid, extractor);
  ASSERT_EQ(features.u.shape(), (Shape{6, 1, 1}));
  Tensor direct = extractor.forward(grid.as_batch());
  for (std::size_t n = 0; n < 6; ++n) EXPECT_EQ(features.u[n], direct[n]);
}

TEST(ExtractorTest, DuplicatedCellsGiveIdenticalColumns) {
  std::mt19937_64 rng(3);
  FeatureExtractor extractor = init_extractor(small_config(), 7);
  CellGrid grid = random_grid(2, 2, 16, rng);
  std::copy(grid.cell(0, 0), grid.cell(0, 0) + grid.cell_values(), grid.cell(1, 1));
  FeatureGrid f = extract(grid, extractor);
  for (std::size_t n = 0; n < 6; ++n) EXPECT_EQ(f.u[n * 4 + 0], f.u[n * 4 + 3]);
}

TEST(ExtractorTest, ShapeFollowsGrid) {
  std::mt19937_64 rng(4);
  for (std::size_t k : {3u, 6u, 9u}) {
    FeatureExtractor extractor = init_extractor(small_config(k), 1);
    FeatureGrid f = extract(random_grid(2, 3, 16, rng), extractor);
    EXPECT_EQ(f.u.shape(), (Shape{k, 2, 3}));
    EXPECT_TRUE(f.u.all_finite());
  }
}

TEST(ExtractorTest, AnyGridSizeWithoutReconfiguration) {
  std::mt19937_64 rng(5);
  FeatureExtractor extractor = init_extractor(small_config(), 3);
  for (std::size_t r = 1; r <= 8; ++r) {
    for (std::size_t c = 1; c <= 8; ++c) {
      FeatureGrid f = extract(random_grid(r, c, 8, rng), extractor);
      ASSERT_EQ(f.u.shape(), (Shape{6, r, c}));
    }
  }
}

TEST(ExtractorTest, PermutingCellsPermutesColumns) {
  std::mt19937_64 rng(6);
  FeatureExtractor extractor = init_extractor(small_config(), 3);
  CellGrid grid = random_grid(2, 3, 16, rng);
  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  CellGrid permuted = grid;
  for (std::size_t p = 0; p < 6; ++p) {
    std::copy(grid.cells.begin() + perm[p] * grid.cell_values(),
              grid.cells.begin() + (perm[p] + 1) * grid.cell_values(),
              permuted.cells.begin() + p * grid.cell_values());
  }
  FeatureGrid a = extract(grid, extractor);
  FeatureGrid b = extract(permuted, extractor);
  for (std::size_t n = 0; n < 6; ++n) {
    for (std::size_t p = 0; p < 6; ++p) EXPECT_EQ(b.u[n * 6 + p], a.u[n * 6 + perm[p]]);
  }
}

TEST(InitTest, SeedDeterminism) {
  auto a = init_extractor(ExtractorConfig::desk(), 11).parameters();
  auto b = init_extractor(ExtractorConfig::desk(), 11).parameters();
  auto c = init_extractor(ExtractorConfig::desk(), 12).parameters();
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_TRUE(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()));
    differs |= !std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), c[i].tensor.data().begin());
  }
  EXPECT_TRUE(differs);
}

TEST(InitTest, MsraVarianceMatchesFanIn) {
  ExtractorConfig config;
  config.in_channels = 64;
  config.stages = {{20, 3, 1}};
  FeatureExtractor extractor = init_extractor(config, 5);
  const Tensor& kernel = extractor.parameters()[0].tensor;
  ASSERT_GE(kernel.numel(), 10000u);
  double mean = 0.0, sq = 0.0;
  for (double v : kernel.data()) {
    mean += v;
    sq += v * v;
  }
  mean /= static_cast<double>(kernel.numel());
  const double var = sq / static_cast<double>(kernel.numel()) - mean * mean;
  EXPECT_NEAR(var, 2.0 / 576.0, 0.2 * 2.0 / 576.0);
}

TEST(InitTest, GlorotBound) {
  Rng rng = make_rng(1, Stream::kInit);
  Tensor w = Tensor::zeros({16, 128});
  glorot_uniform(w, 128, 16, rng);
  const double bound = std::sqrt(6.0 / 144.0);
  for (double v : w.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(ExtractorTest, GradientsReachUnfrozenWeightsOnly) {
  std::mt19937_64 rng(9);
  ExtractorConfig config = small_config();
  config.freeze_depth = 1;
  FeatureExtractor extractor = init_extractor(config, 2);
  FeatureGrid f = extract(random_grid(2, 2, 16, rng), extractor);
  backward(sum(f.u));
  auto params = extractor.parameters();
  EXPECT_FALSE(params[0].tensor.requires_grad());
  EXPECT_FALSE(params[0].tensor.has_grad());
  EXPECT_FALSE(params[1].tensor.has_grad());
  ASSERT_TRUE(params[2].tensor.has_grad());
  double norm = 0.0;
  for (double g : params[2].tensor.grad()) norm += std::abs(g);
  EXPECT_GT(norm, 0.0);
}

TEST(ExtractorTest, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(10);
  FeatureExtractor extractor = init_extractor(small_config(3), 4);
  CellGrid grid = random_grid(2, 2, 8, rng);
  std::normal_distribution<double> dist;
  std::vector<double> w(12);
  for (double& v : w) v = dist(rng);
  Tensor weights = Tensor::from_data({3, 2, 2}, w);
  std::vector<std::pair<std::string, Tensor>> params;
  for (auto& p : extractor.parameters()) params.emplace_back(p.name, p.tensor);
  auto loss = [&] { return sum(mul(extract(grid, extractor).u, weights)); };
  auto r = testing::grad_check(loss, params);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

}  // namespace
}  // namespace gridattn
