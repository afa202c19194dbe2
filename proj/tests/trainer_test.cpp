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

#include "gridattn/trainer.hpp"

namespace gridattn {
namespace {

ExtractorConfig tiny_extractor() {
  ExtractorConfig e;
  e.stages = {{4, 3, 2}, {6, 3, 2}};
  return e;
}

AttentionConfig tiny_attention() {
  AttentionConfig a;
  a.heads = 2;
  a.hidden = 0;
  return a;
}

DataConfig tiny_data() {
  DataConfig d;
  d.cell_size = 8;
  return d;
}

// Dark square on the left for class 1, on the right for class 0.
std::vector<SlideImage> toy_images(std::size_t n, const std::string& prefix) {
  std::vector<SlideImage> out;
  Rng rng(42);
  std::normal_distribution<double> noise(0.0, 0.02);
  for (std::size_t i = 0; i < n; ++i) {
    SlideImage s;
    s.pixels = Image(16, 24, 3, 0.7);
    const bool left = i % 2 == 1;
    for (std::size_t y = 0; y < 16; ++y) {
      for (std::size_t x = 0; x < 24; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          s.pixels.at(y, x, c) += noise(rng) + ((left ? x < 8 : x >= 16) ? -0.4 : 0.0);
        }
      }
    }
    s.label = left ? ClassId::kBeNoDysplasia : ClassId::kNormal;
    s.group_id = prefix + std::to_string(i);
    out.push_back(std::move(s));
  }
  return out;
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.augment.enabled = false;
  return t;
}

TEST(TrainerTest, OneEpochFourImagesBatchTwoIsTwoSteps) {
  AttentionModel model(tiny_extractor(), tiny_attention(), 1);
  AttentionTrainer trainer(model, quick(1), tiny_data(), "cfg");
  TrainOutcome out = trainer.run(toy_images(4, "t"), toy_images(2, "v"));
  EXPECT_EQ(out.steps, 2u);
  ASSERT_EQ(out.log.size(), 1u);
  EXPECT_EQ(out.last.epoch, 1u);
  EXPECT_EQ(out.last.optimizer_step, 2u);
  EXPECT_DOUBLE_EQ(out.log[0].lr, 1e-3);
}

TEST(TrainerTest, OddBatchCountsPartialStep) {
  AttentionModel model(tiny_extractor(), tiny_attention(), 1);
  TrainConfig cfg = quick(2);
  cfg.batch_size = 2;
  AttentionTrainer trainer(model, cfg, tiny_data(), "cfg");
  EXPECT_EQ(trainer.run(toy_images(5, "t"), {}).steps, 6u);
}

TEST(TrainerTest, RefusesGroupLeakage) {
  AttentionModel model(tiny_extractor(), tiny_attention(), 1);
  AttentionTrainer trainer(model, quick(1), tiny_data(), "cfg");
  auto train = toy_images(4, "g");
  auto val = toy_images(2, "g");
  EXPECT_THROW(trainer.run(train, val), LeakageError);
}

TEST(TrainerTest, LearnsToyTaskAndKeepsBestByValidationLoss) {
  AttentionModel model(tiny_extractor(), tiny_attention(), 3);
  TrainConfig cfg = quick(30);
  cfg.schedule.lr0 = 0.01;
  AttentionTrainer trainer(model, cfg, tiny_data(), "cfg");
  TrainOutcome out = trainer.run(toy_images(8, "t"), toy_images(4, "v"));
  ASSERT_EQ(out.log.size(), 30u);
  EXPECT_LT(out.log.back().train_loss, 0.5 * out.log.front().train_loss);
  EXPECT_EQ(out.log.back().val_acc, 1.0);
  double best = 1e300;
  for (const auto& e : out.log) best = std::min(best, e.val_loss);
  EXPECT_EQ(out.best_val_loss, best);
  const std::size_t best_epoch = out.best.epoch - 1;
  EXPECT_EQ(out.log[best_epoch].val_loss, best);
}

TEST(TrainerTest, FrozenExtractorStaysBitIdentical) {
  ExtractorConfig e = tiny_extractor();
  e.freeze_depth = 2;
  AttentionModel model(e, tiny_attention(), 4);
  std::vector<std::vector<double>> before;
  for (const auto& p : model.extractor().parameters()) before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  std::vector<double> head_before(model.attention().parameters()[0].tensor.data().begin(),
                                  model.attention().parameters()[0].tensor.data().end());
  AttentionTrainer trainer(model, quick(2), tiny_data(), "cfg");
  trainer.run(toy_images(4, "t"), {});
  auto after = model.extractor().parameters();
  for (std::size_t i = 0; i < after.size(); ++i) {
    EXPECT_TRUE(std::equal(before[i].begin(), before[i].end(), after[i].tensor.data().begin())) << after[i].name;
  }
  auto head_after = model.attention().parameters()[0].tensor.data();
  EXPECT_FALSE(std::equal(head_before.begin(), head_before.end(), head_after.begin()));
}

TEST(TrainerTest, SameSeedSameTrajectory) {
  auto run = [] {
    AttentionModel model(tiny_extractor(), tiny_attention(), 5);
    TrainConfig cfg = quick(3);
    cfg.augment.enabled = true;
    AttentionTrainer trainer(model, cfg, tiny_data(), "cfg");
    return trainer.run(toy_images(6, "t"), toy_images(2, "v"));
  };
  TrainOutcome a = run(), b = run();
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].val_loss, b.log[i].val_loss);
  }
  EXPECT_EQ(a.last.weights, b.last.weights);
  EXPECT_EQ(a.last.optimizer, b.last.optimizer);
}

TEST(TrainerTest, ResumeMatchesUninterruptedRun) {
  TrainConfig cfg = quick(4);
  cfg.augment.enabled = true;
  const auto train = toy_images(6, "t");
  const auto val = toy_images(2, "v");

  AttentionModel full_model(tiny_extractor(), tiny_attention(), 6);
  TrainOutcome full = AttentionTrainer(full_model, cfg, tiny_data(), "cfg").run(train, val);

  TrainConfig first = cfg;
  first.epochs = 2;
  AttentionModel a(tiny_extractor(), tiny_attention(), 6);
  TrainOutcome part = AttentionTrainer(a, first, tiny_data(), "cfg").run(train, val);
  const auto path = std::filesystem::temp_directory_path() / "gridattn_resume.gatt";
  save_checkpoint(path, part.last);
  Checkpoint loaded = load_checkpoint(path);

  AttentionModel b(tiny_extractor(), tiny_attention(), 99);
  TrainOutcome rest = AttentionTrainer(b, cfg, tiny_data(), "cfg").run(train, val, &loaded);
  ASSERT_EQ(rest.log.size(), 2u);
  EXPECT_EQ(rest.log[0].epoch, 2u);
  EXPECT_EQ(rest.last.epoch, 4u);
  EXPECT_EQ(rest.log[1].train_loss, full.log[3].train_loss);
  EXPECT_EQ(rest.last.weights, full.last.weights);
  EXPECT_EQ(rest.best.epoch, full.best.epoch);
}

TEST(TrainerTest, PredictGivesProbabilitiesAndMaps) {
  AttentionModel model(tiny_extractor(), tiny_attention(), 7);
  Prediction p = predict(model, toy_images(1, "x")[0].pixels, tiny_data(), ChannelStats{});
  ASSERT_EQ(p.probs.size(), 4u);
  double total = 0.0;
  for (double v : p.probs) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
  ASSERT_EQ(p.maps.size(), 2u);
  EXPECT_EQ(p.maps[0].shape(), (Shape{2, 3}));
  EXPECT_FALSE(p.maps[0].requires_grad());
}

TEST(TrainerTest, LogRowFormat) {
  EpochLog e{3, 0.5, 0.25, 0.125, 1.0};
  EXPECT_EQ(format_log_row(e), "3,0.5,0.25,0.125,1");
}

TEST(TrainerTest, ConfigValidation) {
  TrainConfig t;
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  DataConfig d;
  d.overlap = 32;
  EXPECT_THROW(d.validate(), ConfigError);
}

}  // namespace
}  // namespace gridattn
