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
#include <random>

#include "gridattn/metrics.hpp"
#include "reference_scores.hpp"

namespace gridattn {
namespace {

namespace fs = std::filesystem;

TEST(PerClassMetricsTest, PerfectDiagonal) {
  ConfusionMatrix cm;
  for (std::size_t c = 0; c < kNumClasses; ++c) cm.counts[c][c] = c + 2;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    ClassMetrics m = per_class_metrics(cm, class_at(c));
    EXPECT_EQ(m.accuracy, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.f1, 1.0);
  }
}

TEST(PerClassMetricsTest, HandCountedExample) {
  ConfusionMatrix cm;
  cm.counts = {{{5, 1, 0, 0}, {2, 3, 1, 0}, {0, 0, 4, 2}, {1, 0, 0, 6}}};
  ClassMetrics m = per_class_metrics(cm, ClassId::kNormal);
  EXPECT_EQ(m.tp, 5u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_EQ(m.fp, 3u);
  EXPECT_EQ(m.tn, 16u);
  EXPECT_DOUBLE_EQ(m.accuracy, 21.0 / 25.0);
  EXPECT_DOUBLE_EQ(m.recall, 5.0 / 6.0);
  EXPECT_DOUBLE_EQ(m.precision, 5.0 / 8.0);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 * 5 / 8 * 5 / 6 / (5.0 / 8 + 5.0 / 6));
  std::size_t tp_sum = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) tp_sum += per_class_metrics(cm, class_at(c)).tp;
  EXPECT_EQ(tp_sum, cm.trace());
}

TEST(PerClassMetricsTest, ZeroDenominatorsAreFlagged) {
  ConfusionMatrix cm;
  cm.counts[0][0] = 3;
  ClassMetrics m = per_class_metrics(cm, ClassId::kAdenocarcinoma);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_TRUE(m.recall_undefined);
  EXPECT_TRUE(m.precision_undefined);
  EXPECT_TRUE(m.f1_undefined);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_THROW(per_class_metrics(ConfusionMatrix{}, ClassId::kNormal), std::invalid_argument);
}

TEST(PerClassMetricsTest, ReferenceF1FromPrecisionAndRecall) {
  double mean_attention = 0.0, mean_baseline = 0.0;
  for (const auto& row : testing::reference_rows()) {
    ClassMetrics m = per_class_metrics(testing::matrix_with(row.cls, row.precision, row.recall), row.cls);
    EXPECT_NEAR(m.precision, row.precision, 1e-6);
    EXPECT_NEAR(m.recall, row.recall, 1e-6);
    EXPECT_NEAR(m.f1, row.f1, 0.005) << row.model << " " << kClassNames[index_of(row.cls)];
    (row.model == "attention" ? mean_attention : mean_baseline) += m.f1 / 4.0;
  }
  EXPECT_NEAR(mean_attention, testing::kReferenceMeanF1Attention, 0.005);
  EXPECT_NEAR(mean_baseline, testing::kReferenceMeanF1Baseline, 0.005);
}

TEST(RocTest, Examples) {
  EXPECT_DOUBLE_EQ(roc({1, 0, 1, 0}, {true, false, true, false}).auc, 1.0);
  EXPECT_DOUBLE_EQ(roc({0.4, 0.4, 0.4, 0.4}, {true, false, true, false}).auc, 0.5);
  RocCurve c = roc({0.9, 0.8, 0.3, 0.1}, {true, false, true, false});
  EXPECT_DOUBLE_EQ(c.auc, 0.75);
  ASSERT_EQ(c.points.size(), 5u);
  EXPECT_EQ(c.points.back().fpr, 1.0);
  EXPECT_EQ(c.points.back().tpr, 1.0);
  EXPECT_FALSE(roc({0.1, 0.2}, {true, true}).defined);
  EXPECT_THROW(roc({0.1}, {true, false}), DimensionError);
}

TEST(RocTest, AucEqualsMannWhitneyOnRandomInstances) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> score(0, 5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 10;
    std::vector<double> s(n);
    std::vector<bool> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = score(rng) / 5.0;
      y[i] = rng() % 2;
    }
    y[0] = true;
    y[1] = false;
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (!y[i] || y[j]) continue;
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
    EXPECT_NEAR(roc(s, y).auc, wins / pairs, 1e-12);
  }
}

TEST(ReportTest, MeansAreMeansOfClassValues) {
  std::vector<ClassId> truth{ClassId::kNormal, ClassId::kNormal, ClassId::kBeNoDysplasia, ClassId::kAdenocarcinoma,
                             ClassId::kBeWithDysplasia};
  std::vector<std::vector<double>> probs{
      {0.7, 0.1, 0.1, 0.1}, {0.2, 0.5, 0.2, 0.1}, {0.1, 0.6, 0.2, 0.1}, {0.1, 0.1, 0.1, 0.7}, {0.1, 0.1, 0.1, 0.7}};
  MetricsReport r = build_report(truth, probs);
  EXPECT_EQ(r.confusion.total(), 5u);
  double acc = 0.0, f1 = 0.0;
  for (const auto& m : r.per_class) {
    acc += m.accuracy;
    f1 += m.f1;
  }
  EXPECT_DOUBLE_EQ(r.mean_accuracy, acc / 4.0);
  EXPECT_DOUBLE_EQ(r.mean_f1, f1 / 4.0);
  EXPECT_TRUE(r.roc_curves[0].defined);
  const std::string text = format_report(r, "test");
  EXPECT_NE(text.find("Mean"), std::string::npos);
  EXPECT_NE(format_paired_table(r, "attention", r, "baseline").find("baseline"), std::string::npos);
}

TEST(ReportTest, CsvFiles) {
  const fs::path dir = fs::temp_directory_path() / "gridattn_metrics";
  fs::remove_all(dir);
  MetricsReport r = build_report({ClassId::kNormal, ClassId::kAdenocarcinoma},
                                 std::vector<ClassId>{ClassId::kNormal, ClassId::kNormal});
  write_metrics_csv(dir / "metrics.csv", r);
  write_confusion_csv(dir / "confusion.csv", r.confusion);
  std::ifstream is(dir / "confusion.csv");
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(row, "normal,1,0,0,0");
  std::ifstream ms(dir / "metrics.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(ms, line)) ++lines;
  EXPECT_EQ(lines, 6u);
}

TEST(ExportAttentionTest, BytesAndSidecar) {
  const fs::path dir = fs::temp_directory_path() / "gridattn_export";
  fs::remove_all(dir);
  Tensor uniform = Tensor::full({2, 3}, 1.0 / 6.0);
  Tensor onehot = Tensor::from_data({2, 2}, {0, 0, 1, 0});
  Tensor mixed = Tensor::from_data({1, 4}, {0.1, 0.2, 0.3, 0.4});
  auto paths = export_attention({uniform, onehot, mixed}, dir / "img1");
  ASSERT_EQ(paths.size(), 3u);
  Image u = read_image(paths[0]);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(to_byte(u.pixels[i * 3]), 255);
  Image o = read_image(paths[1]);
  EXPECT_EQ(to_byte(o.at(1, 0, 0)), 255);
  EXPECT_EQ(to_byte(o.at(0, 0, 0)), 0);
  Image m = read_image(paths[2]);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(to_byte(m.at(0, i, 0)), std::lround(255.0 * mixed[i] / 0.4));
  }
  std::ifstream is(dir / "img1_max.txt");
  std::string header, first;
  std::getline(is, header);
  std::getline(is, first);
  EXPECT_EQ(header, "head,max");
  EXPECT_EQ(first, "0," + format_double(1.0 / 6.0));
}

TEST(ExportAttentionTest, UnwritablePathIsIoError) {
  EXPECT_THROW(export_attention({Tensor::full({1, 1}, 1.0)}, "/proc/gridattn_no/x"), IoError);
}

TEST(LocalizationTest, Examples) {
  const std::vector<RoiBox> boxes{{{0, 0, 10, 10}, ClassId::kAdenocarcinoma}};
  Tensor uniform = Tensor::full({2, 2}, 0.25);
  EXPECT_DOUBLE_EQ(localization_score(uniform, boxes, ClassId::kAdenocarcinoma, 32, 32).ratio, 1.0);
  Tensor hand = Tensor::from_data({2, 2}, {0.7, 0.1, 0.1, 0.1});
  Localization l = localization_score(hand, boxes, ClassId::kAdenocarcinoma, 32, 32);
  EXPECT_TRUE(l.defined);
  EXPECT_EQ(l.lesion_cells, 1u);
  EXPECT_NEAR(l.ratio, 7.0, 1e-12);
  Tensor all = Tensor::from_data({2, 2}, {1, 0, 0, 0});
  EXPECT_TRUE(std::isinf(localization_score(all, boxes, ClassId::kAdenocarcinoma, 32, 32).ratio));
  EXPECT_FALSE(localization_score(hand, boxes, ClassId::kBeNoDysplasia, 32, 32).defined);
  const std::vector<RoiBox> everywhere{{{0, 0, 64, 64}, ClassId::kAdenocarcinoma}};
  EXPECT_FALSE(localization_score(hand, everywhere, ClassId::kAdenocarcinoma, 32, 32).defined);
}

TEST(LocalizationTest, BoxTouchingCellEdgeDoesNotCount) {
  const std::vector<RoiBox> boxes{{{32, 0, 10, 10}, ClassId::kBeNoDysplasia}};
  Tensor map = Tensor::from_data({1, 2}, {0.2, 0.8});
  Localization l = localization_score(map, boxes, ClassId::kBeNoDysplasia, 32, 32);
  EXPECT_EQ(l.lesion_cells, 1u);
  EXPECT_DOUBLE_EQ(l.ratio, 4.0);
}

}  // namespace
}  // namespace gridattn
