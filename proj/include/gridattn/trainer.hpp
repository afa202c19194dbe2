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

// End-to-end training of the grid attention model from image labels.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "gridattn/augment.hpp"
#include "gridattn/checkpoint.hpp"
#include "gridattn/model.hpp"
#include "gridattn/optim.hpp"
#include "gridattn/settings.hpp"
#include "gridattn/tiler.hpp"

namespace gridattn {

struct DataConfig {
  std::size_t cell_size = 32;
  std::size_t overlap = 0;
  double white_threshold = kDefaultWhiteThreshold;
  double tissue_fraction = kDefaultTissueFraction;

  void validate() const {
    if (cell_size < 8) throw ConfigError("data: cell_size must be at least 8");
    if (overlap >= cell_size) throw ConfigError("data: overlap must be smaller than cell_size");
    if (!(white_threshold > 0.0 && white_threshold <= 1.0)) throw ConfigError("data: white_threshold must be in (0, 1]");
    if (!(tissue_fraction >= 0.0 && tissue_fraction <= 1.0)) throw ConfigError("data: tissue_fraction must be in [0, 1]");
  }
};

struct TrainConfig {
  ScheduleConfig schedule;
  std::size_t epochs = 30;
  std::size_t batch_size = 2;
  std::uint64_t seed = 1;
  AugmentConfig augment;

  void validate() const {
    schedule.validate();
    augment.validate();
    if (epochs == 0) throw ConfigError("train: epochs must be positive");
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  }
};

/// Tiles and normalizes an image for the model.
inline CellGrid prepare_cells(const Image& image, const DataConfig& data, const ChannelStats& stats) {
  return normalize_cells(tile(image, data.cell_size, data.overlap, data.white_threshold, data.tissue_fraction), stats);
}

struct Prediction {
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<Tensor> maps;  // [rows, cols] per head
  CellGrid cells;            // geometry and tissue mask; pixel values dropped
};

inline Prediction predict(const AttentionModel& model, const Image& image, const DataConfig& data,
                          const ChannelStats& stats) {
  NoGradGuard no_grad;
  Prediction p;
  p.cells = prepare_cells(image, data, stats);
  Classification out = model.forward(p.cells, Mode::kEval);
  p.logits.assign(out.logits.data().begin(), out.logits.data().end());
  p.probs = softmax_values(p.logits);
  p.maps = std::move(out.maps);
  p.cells.cells.clear();
  p.cells.cells.shrink_to_fit();
  return p;
}

inline std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Throws LeakageError if a group occurs in both sets.
inline void check_disjoint_groups(const std::vector<SlideImage>& a, const std::vector<SlideImage>& b) {
  std::set<std::string> groups;
  for (const auto& s : a) groups.insert(s.group_id);
  for (const auto& s : b) {
    if (groups.count(s.group_id)) {
      throw LeakageError("group '" + s.group_id + "' appears in both the training and validation sets");
    }
  }
}

struct EpochLog {
  std::size_t epoch = 0;  // 0-based
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

inline constexpr std::string_view kTrainLogHeader = "epoch,lr,train_loss,val_loss,val_acc";

inline std::string format_log_row(const EpochLog& e) {
  return std::to_string(e.epoch) + "," + format_double(e.lr) + "," + format_double(e.train_loss) + "," +
         format_double(e.val_loss) + "," + format_double(e.val_acc);
}

struct TrainOutcome {
  Checkpoint last;
  Checkpoint best;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<EpochLog> log;
  std::size_t steps = 0;
};

namespace detail {

inline void store_best_loss(Checkpoint& ckpt, double best) {
  std::erase_if(ckpt.optimizer, [](const ArrayRecord& r) { return r.name == "trainer.best_val_loss"; });
  ckpt.optimizer.push_back({"trainer.best_val_loss", {1}, {best}});
}

inline double load_best_loss(const Checkpoint& ckpt) {
  for (const auto& r : ckpt.optimizer) {
    if (r.name == "trainer.best_val_loss" && r.data.size() == 1) return r.data[0];
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace detail

struct ValidationResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

inline ValidationResult validate_model(const AttentionModel& model, const std::vector<SlideImage>& images,
                                       const DataConfig& data, const ChannelStats& stats) {
  ValidationResult r;
  if (images.empty()) return r;
  NoGradGuard no_grad;
  for (const auto& s : images) {
    Classification out = model.forward(prepare_cells(s.pixels, data, stats), Mode::kEval);
    r.loss += cross_entropy(out.logits, index_of(s.label)).item();
    std::vector<double> logits(out.logits.data().begin(), out.logits.data().end());
    r.accuracy += argmax(logits) == index_of(s.label);
  }
  r.loss /= static_cast<double>(images.size());
  r.accuracy /= static_cast<double>(images.size());
  return r;
}

/// Trains `model` in place. Every epoch draws its shuffle, augmentation and
/// dropout streams from (seed, epoch), so a resumed run continues exactly as
/// an uninterrupted one would.
class AttentionTrainer {
 public:
  using EpochCallback = std::function<void(const EpochLog&, const TrainOutcome&)>;

  AttentionTrainer(AttentionModel& model, TrainConfig train, DataConfig data, std::string config_text)
      : model_(model), train_(std::move(train)), data_(data), config_text_(std::move(config_text)) {
    train_.validate();
    data_.validate();
  }

  TrainOutcome run(const std::vector<SlideImage>& train_set, const std::vector<SlideImage>& val_set,
                   const Checkpoint* resume = nullptr, const EpochCallback& on_epoch = {}) {
    if (train_set.empty()) throw DataError("training set is empty");
    check_disjoint_groups(train_set, val_set);
    Adam adam(model_.parameters());
    TrainOutcome outcome;
    ChannelStats stats;
    std::size_t start = 0;
    if (resume != nullptr) {
      restore(model_.parameters(), resume->weights);
      restore_optimizer(adam, resume->optimizer, resume->optimizer_step);
      stats = resume->stats;
      start = resume->epoch;
      outcome.best_val_loss = detail::load_best_loss(*resume);
      outcome.best = *resume;
    } else {
      std::vector<Image> pixels;
      pixels.reserve(train_set.size());
      for (const auto& s : train_set) pixels.push_back(s.pixels);
      stats = compute_channel_stats(pixels, data_.white_threshold);
    }

    for (std::size_t epoch = start; epoch < train_.epochs; ++epoch) {
      const double lr = lr_at(epoch, train_.schedule);
      Rng shuffle_rng = make_rng(train_.seed, Stream::kShuffle, epoch);
      Rng augment_rng = make_rng(train_.seed, Stream::kAugment, epoch);
      Rng dropout_rng = make_rng(train_.seed, Stream::kDropout, epoch);
      std::vector<std::size_t> order(train_set.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), shuffle_rng);

      double train_loss = 0.0;
      for (std::size_t begin = 0; begin < order.size(); begin += train_.batch_size) {
        const std::size_t end = std::min(order.size(), begin + train_.batch_size);
        const double weight = 1.0 / static_cast<double>(end - begin);
        adam.zero_grad();
        for (std::size_t i = begin; i < end; ++i) {
          const SlideImage& sample = train_set[order[i]];
          const SlideImage view = augment(sample, augment_rng, train_.augment);
          Classification out = model_.forward(prepare_cells(view.pixels, data_, stats), Mode::kTrain, &dropout_rng);
          Tensor loss = cross_entropy(out.logits, index_of(sample.label));
          if (!std::isfinite(loss.item())) {
            throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch));
          }
          train_loss += loss.item();
          backward(scale(loss, weight));
        }
        adam.step(lr);
        ++outcome.steps;
      }

      EpochLog entry;
      entry.epoch = epoch;
      entry.lr = lr;
      entry.train_loss = train_loss / static_cast<double>(train_set.size());
      const ValidationResult val = validate_model(model_, val_set, data_, stats);
      entry.val_loss = val_set.empty() ? entry.train_loss : val.loss;
      entry.val_acc = val.accuracy;
      outcome.log.push_back(entry);

      outcome.last = snapshot_checkpoint(adam, stats, epoch + 1);
      if (entry.val_loss < outcome.best_val_loss) {
        outcome.best_val_loss = entry.val_loss;
        outcome.best = outcome.last;
      }
      detail::store_best_loss(outcome.last, outcome.best_val_loss);
      detail::store_best_loss(outcome.best, outcome.best_val_loss);
      if (on_epoch) on_epoch(entry, outcome);
    }
    if (outcome.log.empty()) {
      // Resumed past the final epoch: nothing to do, hand back the input.
      outcome.last = *resume;
    }
    return outcome;
  }

 private:
  Checkpoint snapshot_checkpoint(const Adam& adam, const ChannelStats& stats, std::size_t epochs_done) const {
    Checkpoint c;
    c.epoch = epochs_done;
    c.optimizer_step = adam.steps();
    c.weights = snapshot(model_.parameters());
    c.optimizer = snapshot_optimizer(adam);
    c.stats = stats;
    c.config = config_text_;
    return c;
  }

  AttentionModel& model_;
  TrainConfig train_;
  DataConfig data_;
  std::string config_text_;
};

}  // namespace gridattn
