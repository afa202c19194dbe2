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

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "gridattn/datagen.hpp"

namespace gridattn {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

CorpusSpec small_spec(std::uint64_t seed = 3) {
  CorpusSpec spec;
  spec.seed = seed;
  spec.counts = {6, 4, 3, 3};
  spec.image_min = 96;
  spec.image_max = 128;
  return spec;
}

TEST(DeriveLabelTest, Examples) {
  EXPECT_EQ(derive_label(std::vector<ClassId>{}), ClassId::kNormal);
  EXPECT_EQ(derive_label({ClassId::kBeNoDysplasia, ClassId::kBeWithDysplasia}), ClassId::kBeWithDysplasia);
  EXPECT_EQ(derive_label({ClassId::kAdenocarcinoma, ClassId::kNormal}), ClassId::kAdenocarcinoma);
}

TEST(DeriveLabelTest, OrderInsensitiveAndIdempotent) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ClassId> v;
    const std::size_t n = rng() % 5;
    for (std::size_t i = 0; i < n; ++i) v.push_back(class_at(rng() % 4));
    const ClassId label = derive_label(v);
    std::shuffle(v.begin(), v.end(), rng);
    EXPECT_EQ(derive_label(v), label);
    EXPECT_EQ(derive_label(std::vector<ClassId>{label}), label);
  }
}

TEST(SplitTest, ThreeGroupsThreeWays) {
  std::vector<IndexRecord> records(3);
  for (std::size_t i = 0; i < 3; ++i) records[i].group_id = "g" + std::to_string(i);
  SplitFractions f;
  f.value = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  assign_splits(records, f, 1);
  std::set<Split> used;
  for (const auto& r : records) used.insert(r.split);
  EXPECT_EQ(used.size(), 3u);
}

TEST(SplitTest, SingleGroupCannotSplit) {
  std::vector<IndexRecord> records(5);
  for (auto& r : records) r.group_id = "only";
  EXPECT_THROW(assign_splits(records, SplitFractions{}, 1), DataError);
}

TEST(SplitTest, FractionsMustSumToOne) {
  std::vector<IndexRecord> records(3);
  SplitFractions f;
  f.value = {0.5, 0.5, 0.5};
  EXPECT_THROW(assign_splits(records, f, 1), ConfigError);
}

TEST(SplitTest, GroupDisjointAndWithinOneGroupOfTarget) {
  CorpusSpec spec;
  std::vector<IndexRecord> base = generate(spec);
  ASSERT_EQ(base.size(), 450u);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::vector<IndexRecord> records = base;
    assign_splits(records, spec.fractions, seed);
    ASSERT_NO_THROW(check_group_disjoint(records)) << "seed " << seed;
    std::map<std::string, std::size_t> group_size;
    std::size_t largest = 0;
    for (const auto& r : records) largest = std::max(largest, ++group_size[r.group_id]);
    std::array<double, 3> count{};
    for (const auto& r : records) count[static_cast<std::size_t>(r.split)] += 1.0;
    for (std::size_t s = 0; s < 3; ++s) {
      EXPECT_LE(std::abs(count[s] - spec.fractions.value[s] * 450.0), static_cast<double>(largest))
          << "seed " << seed << " split " << s;
    }
  }
}

TEST(SplitTest, LeakageDetected) {
  std::vector<IndexRecord> records(2);
  records[0].group_id = records[1].group_id = "g";
  records[0].id = "a";
  records[1].id = "b";
  records[1].split = Split::kTest;
  EXPECT_THROW(check_group_disjoint(records), LeakageError);
}

TEST(IndexTest, BoxesRoundTrip) {
  std::vector<RoiBox> boxes{{{1, 2, 30, 40}, ClassId::kAdenocarcinoma}, {{5, 6, 7, 8}, ClassId::kBeNoDysplasia}};
  EXPECT_EQ(format_boxes(boxes), "1:2:30:40:adenocarcinoma;5:6:7:8:be_no_dysplasia");
  EXPECT_EQ(parse_boxes(format_boxes(boxes)), boxes);
  EXPECT_TRUE(parse_boxes("").empty());
  EXPECT_THROW(parse_boxes("1:2:3"), DataError);
  EXPECT_THROW(parse_boxes("1:2:3:4:tumour"), DataError);
}

TEST(IndexTest, ShiftBoxesClipsToFrame) {
  auto out = shift_boxes({{{5, 5, 10, 10}, ClassId::kBeNoDysplasia}, {{0, 0, 3, 3}, ClassId::kAdenocarcinoma}},
                         {4, 4, 8, 20});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].box, (BoundingBox{1, 1, 7, 10}));
}

TEST(GenerateTest, SpecValidation) {
  CorpusSpec spec = small_spec();
  spec.lesions_min = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = small_spec();
  spec.lesion_min = spec.lesion_max = 200;
  EXPECT_THROW(generate(spec), ConfigError);
}

TEST(GenerateTest, LabelsBoxesAndGroups) {
  CorpusSpec spec = small_spec();
  spec.lesions_min = 2;
  std::vector<IndexRecord> records = generate(spec);
  std::map<std::string, std::size_t> group_size;
  for (const auto& r : records) {
    ++group_size[r.group_id];
    if (r.label == ClassId::kNormal) {
      EXPECT_TRUE(r.boxes.empty());
      continue;
    }
    ASSERT_GE(r.boxes.size(), 2u);
    std::vector<ClassId> classes;
    bool has_own = false;
    for (const auto& b : r.boxes) {
      classes.push_back(b.cls);
      has_own |= b.cls == r.label;
      EXPECT_LE(b.box.x + b.box.w, spec.image_max);
      EXPECT_LE(b.box.y + b.box.h, spec.image_max);
    }
    EXPECT_TRUE(has_own);
    EXPECT_EQ(derive_label(classes), r.label);
  }
  for (const auto& [g, n] : group_size) {
    EXPECT_GE(n, 1u);
    EXPECT_LE(n, 3u);
  }
  EXPECT_LT(group_size.size(), records.size());
}

TEST(GenerateTest, AdenoWithLowerRiskLesionIsAdeno) {
  CorpusSpec spec = small_spec();
  spec.lesions_min = spec.lesions_max = 3;
  bool seen = false;
  for (const auto& r : generate(spec)) {
    if (r.label != ClassId::kAdenocarcinoma) continue;
    for (const auto& b : r.boxes) seen |= b.cls == ClassId::kBeNoDysplasia;
  }
  EXPECT_TRUE(seen);
}

// Mean 3x3 local variance of the channel mean, inside or outside lesions.
std::pair<double, double> local_variance(const Image& img, const std::vector<RoiBox>& boxes) {
  double in = 0, out = 0, n_in = 0, n_out = 0;
  auto inside = [&](std::size_t y, std::size_t x) {
    for (const auto& b : boxes) {
      if (x >= b.box.x + 4 && x + 4 < b.box.x + b.box.w && y >= b.box.y + 4 && y + 4 < b.box.y + b.box.h) {
        return 1;
      }
      if (x + 2 >= b.box.x && x < b.box.x + b.box.w + 2 && y + 2 >= b.box.y && y < b.box.y + b.box.h + 2) return -1;
    }
    return 0;
  };
  for (std::size_t y = 20; y + 20 < img.height; ++y) {
    for (std::size_t x = 20; x + 20 < img.width; ++x) {
      const int where = inside(y, x);
      if (where < 0) continue;
      double s = 0, sq = 0;
      for (std::size_t dy = 0; dy < 3; ++dy) {
        for (std::size_t dx = 0; dx < 3; ++dx) {
          const double v = img.channel_mean(y + dy - 1, x + dx - 1);
          s += v;
          sq += v * v;
        }
      }
      const double var = sq / 9 - (s / 9) * (s / 9);
      (where ? in : out) += var;
      (where ? n_in : n_out) += 1;
    }
  }
  return {in / n_in, out / n_out};
}

TEST(GenerateTest, LesionsAreMeasurablyTextured) {
  CorpusSpec spec = small_spec();
  for (std::size_t c = 1; c < kNumClasses; ++c) {
    Rng rng = make_rng(9, Stream::kData, c);
    Rng style_rng = make_rng(9, Stream::kData, 100 + c);
    CorpusSpec one = spec;
    one.lesions_max = 1;
    GeneratedImage g = generate_image(one, class_at(c), draw_group_style(style_rng), rng);
    auto [in, out] = local_variance(g.image, g.boxes);
    EXPECT_GT(in, 2.0 * out) << kClassNames[c] << " in " << in << " out " << out;
  }
}

TEST(GenerateTest, ByteIdenticalPerSeed) {
  const fs::path a = fs::temp_directory_path() / "gridattn_dg_a";
  const fs::path b = fs::temp_directory_path() / "gridattn_dg_b";
  fs::remove_all(a);
  fs::remove_all(b);
  generate(small_spec(4), a);
  generate(small_spec(4), b);
  EXPECT_EQ(slurp(a / "index.csv"), slurp(b / "index.csv"));
  EXPECT_EQ(slurp(a / "spec.txt"), slurp(b / "spec.txt"));
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a / "images")) {
    ++files;
    EXPECT_EQ(slurp(entry.path()), slurp(b / "images" / entry.path().filename()));
  }
  EXPECT_EQ(files, 16u);
  auto records = read_index(a / "index.csv");
  EXPECT_EQ(records, generate(small_spec(4)));
  auto other = generate(small_spec(5));
  EXPECT_NE(records, other);
}

TEST(GenerateTest, SpecTextRoundTrips) {
  CorpusSpec spec = small_spec();
  spec.textures[2].tint = {0.1, -0.2, 0.3};
  spec.noise = 0.0123;
  Settings s = Settings::parse(spec.to_text());
  CorpusSpec back = CorpusSpec::from_settings(s);
  EXPECT_EQ(back.to_text(), spec.to_text());
  Settings bad = Settings::parse("seed = 1\nlesion_minn = 3\n", "spec.txt");
  try {
    CorpusSpec::from_settings(bad);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("lesion_minn"), std::string::npos);
  }
}

TEST(LoadTest, CropsBackgroundAndShiftsBoxes) {
  const fs::path dir = fs::temp_directory_path() / "gridattn_dg_load";
  fs::remove_all(dir);
  auto records = generate(small_spec(6), dir);
  for (const auto& r : records) {
    LoadedImage img = load_image(dir, r);
    Image raw = read_image(dir / r.path);
    EXPECT_LE(img.slide.pixels.width, raw.width);
    EXPECT_EQ(img.boxes.size(), r.boxes.size());
    for (const auto& b : img.boxes) {
      EXPECT_LE(b.box.x + b.box.w, img.slide.pixels.width);
      EXPECT_LE(b.box.y + b.box.h, img.slide.pixels.height);
    }
  }
}

}  // namespace
}  // namespace gridattn
