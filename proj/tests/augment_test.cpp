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

#include "gridattn/augment.hpp"

namespace gridattn {
namespace {

Image checkerboard(std::size_t h, std::size_t w) {
  Image img(h, w, 3);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = ((y / 4 + x / 4) % 2) ? 0.9 : 0.1;
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = v + 0.01 * static_cast<double>(c);
    }
  }
  return img;
}

TEST(AugmentTest, ZeroAngleUnitScaleIsIdentity) {
  Image img = checkerboard(37, 52);
  Image out = rotate_scale(img, 0.0, 1.0);
  ASSERT_EQ(out.height, 37u);
  ASSERT_EQ(out.width, 52u);
  EXPECT_EQ(out.pixels, img.pixels);
}

TEST(AugmentTest, HalfTurnTwiceRestoresImage) {
  Image img = checkerboard(40, 40);
  Image once = rotate_scale(img, 180.0, 1.0);
  EXPECT_EQ(once.at(0, 0, 0), img.at(39, 39, 0));
  Image twice = rotate_scale(once, 180.0, 1.0);
  ASSERT_EQ(twice.height, 40u);
  EXPECT_EQ(twice.pixels, img.pixels);
}

TEST(AugmentTest, QuarterTurnSwapsExtent) {
  Image img = checkerboard(20, 30);
  Image out = rotate_scale(img, 90.0, 1.0);
  EXPECT_EQ(out.height, 30u);
  EXPECT_EQ(out.width, 20u);
}

TEST(AugmentTest, ScaleResizesCanvas) {
  Image out = rotate_scale(checkerboard(100, 100), 0.0, 1.2);
  EXPECT_EQ(out.height, 120u);
  EXPECT_EQ(out.width, 120u);
}

TEST(AugmentTest, UncoveredCanvasGetsFill) {
  Image img(20, 20, 3, 0.3);
  Image out = rotate_scale(img, 45.0, 1.0, 1.0);
  EXPECT_GT(out.width, 20u);
  EXPECT_EQ(out.at(0, 0, 0), 1.0);
  EXPECT_EQ(out.at(out.height / 2, out.width / 2, 0), 0.3);
}

TEST(AugmentTest, KeepsLabelAndGroupAndIsSeeded) {
  SlideImage s{checkerboard(30, 30), ClassId::kBeWithDysplasia, "g7"};
  Rng a = make_rng(3, Stream::kAugment);
  Rng b = make_rng(3, Stream::kAugment);
  SlideImage x = augment(s, a);
  SlideImage y = augment(s, b);
  EXPECT_EQ(x.label, ClassId::kBeWithDysplasia);
  EXPECT_EQ(x.group_id, "g7");
  EXPECT_EQ(x.pixels.pixels, y.pixels.pixels);
  AugmentConfig off;
  off.enabled = false;
  EXPECT_EQ(augment(s, a, off).pixels.pixels, s.pixels.pixels);
}

TEST(AugmentTest, ScaleStaysInRange) {
  Rng rng = make_rng(4, Stream::kAugment);
  SlideImage s{checkerboard(50, 50), ClassId::kNormal, "g"};
  for (int i = 0; i < 50; ++i) {
    Image out = augment(s, rng).pixels;
    // The rotated canvas of a square lies between 1x and sqrt(2)x its side.
    EXPECT_GE(out.width, 39u);
    EXPECT_LE(out.width, 86u);
  }
  AugmentConfig bad;
  bad.scale_min = 1.3;
  EXPECT_THROW(bad.validate(), ConfigError);
}

}  // namespace
}  // namespace gridattn
