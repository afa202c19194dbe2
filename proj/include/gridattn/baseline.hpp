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

// Sliding-window baseline: a crop classifier trained on windows cut from
// annotated boxes, and a priority rule that turns per-window predictions
// into one label per image.

#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "gridattn/checkpoint.hpp"
#include "gridattn/dataset.hpp"
#include "gridattn/metrics.hpp"
#include "gridattn/model.hpp"
#include "gridattn/optim.hpp"
#include "gridattn/trainer.hpp"

namespace gridattn {

struct CropSample {
  std::vector<double> pixels;  // [3, s, s]
  ClassId label = ClassId::kNormal;
  std::string group_id;
};

struct HarvestResult {
  std::vector<CropSample> crops;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<double> cut_crop(const Image& img, std::size_t x0, std::size_t y0, std::size_t s) {
  std::vector<double> out(3 * s * s);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) out[(c * s + y) * s + x] = img.at(y0 + y, x0 + x, c);
    }
  }
  return out;
}

// Window origins along one axis of a span, each window fully inside it.
inline std::vector<std::size_t> window_starts(std::size_t origin, std::size_t extent, std::size_t crop,
                                              std::size_t stride) {
  std::vector<std::size_t> out;
  if (extent < crop) return out;
  for (std::size_t p = 0; p + crop <= extent; p += stride) out.push_back(origin + p);
  return out;
}

}  // namespace detail

/// Windows fully inside each box, labelled with the box class, plus every
/// window on normal images. Boxes smaller than a crop yield a warning.
inline HarvestResult harvest_crops(const std::vector<LoadedImage>& images, std::size_t crop, std::size_t stride,
                                   std::size_t normal_stride) {
  if (crop == 0 || stride == 0 || normal_stride == 0) throw ConfigError("harvest_crops: crop and strides must be positive");
  HarvestResult out;
  for (const auto& item : images) {
    const Image& img = item.slide.pixels;
    if (item.slide.label == ClassId::kNormal) {
      for (std::size_t y : detail::window_starts(0, img.height, crop, normal_stride)) {
        for (std::size_t x : detail::window_starts(0, img.width, crop, normal_stride)) {
          out.crops.push_back({detail::cut_crop(img, x, y, crop), ClassId::kNormal, item.slide.group_id});
        }
      }
    }
    for (const auto& b : item.boxes) {
      const BoundingBox& box = b.box;
      if (box.w < crop || box.h < crop) {
        out.warnings.push_back("image " + item.record.id + ": box " + std::to_string(box.w) + "x" +
                               std::to_string(box.h) + " is smaller than the " + std::to_string(crop) +
                               " px crop, skipped");
        continue;
      }
      if (box.x + box.w > img.width || box.y + box.h > img.height) {
        throw DataError("image " + item.record.id + ": box lies outside the image");
      }
      for (std::size_t y : detail::window_starts(box.y, box.h, crop, stride)) {
        for (std::size_t x : detail::window_starts(box.x, box.w, crop, stride)) {
          out.crops.push_back({detail::cut_crop(img, x, y, crop), b.cls, item.slide.group_id});
        }
      }
    }
  }
  return out;
}

struct WindowPrediction {
  ClassId cls = ClassId::kNormal;
  double confidence = 0.0;
};

// Non-normal classes in priority order, highest risk first.
inline constexpr std::array<ClassId, 3> kPriority = {ClassId::kAdenocarcinoma, ClassId::kBeWithDysplasia,
                                                     ClassId::kBeNoDysplasia};

struct Heuristic {
  // Indexed by class; entry 0 (normal) is unused.
  std::array<std::size_t, kNumClasses> min_count{0, 1, 1, 1};
  std::array<double, kNumClasses> min_confidence{0.0, 0.5, 0.5, 0.5};

  void validate() const {
    for (std::size_t c = 1; c < kNumClasses; ++c) {
      if (min_count[c] < 1) throw ConfigError("heuristic: count thresholds must be at least 1");
      if (!(min_confidence[c] > 0.0 && min_confidence[c] < 1.0)) {
        throw ConfigError("heuristic: confidence thresholds must lie in (0, 1)");
      }
    }
  }

  std::string to_text() const {
    SettingsWriter w;
    w.section("heuristic");
    for (std::size_t c = 1; c < kNumClasses; ++c) {
      const std::string name(kClassNames[c]);
      w.put("min_count." + name, static_cast<std::uint64_t>(min_count[c]));
      w.put("min_confidence." + name, min_confidence[c]);
    }
    return w.text();
  }

  static Heuristic from_settings(Settings& s) {
    Heuristic h;
    for (std::size_t c = 1; c < kNumClasses; ++c) {
      const std::string name(kClassNames[c]);
      h.min_count[c] = s.get_size("heuristic.min_count." + name, h.min_count[c]);
      h.min_confidence[c] = s.get("heuristic.min_confidence." + name, h.min_confidence[c]);
    }
    s.reject_unknown();
    h.validate();
    return h;
  }

  bool operator==(const Heuristic&) const = default;
};

/// First class in priority order with at least t_c windows predicted as c
/// at confidence >= q_c; normal otherwise.
inline ClassId aggregate(const std::vector<WindowPrediction>& windows, const Heuristic& h) {
  for (ClassId c : kPriority) {
    std::size_t n = 0;
    for (const auto& w : windows) n += w.cls == c && w.confidence >= h.min_confidence[index_of(c)];
    if (n >= h.min_count[index_of(c)]) return c;
  }
  return ClassId::kNormal;
}

struct ThresholdGrid {
  std::vector<std::size_t> counts{1, 2, 3, 4, 6, 8};
  std::vector<double> confidences{0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
};

struct SearchResult {
  Heuristic heuristic;
  double mean_f1 = 0.0;
  std::size_t evaluated = 0;
};

/// Exhaustive search maximising mean one-vs-rest F1. Ties go to the
/// lexicographically smallest (t1, t2, t3, q1, q2, q3), where index 1..3
/// follows class order.
inline SearchResult search_thresholds(const std::vector<std::vector<WindowPrediction>>& windows,
                                      const std::vector<ClassId>& truth, ThresholdGrid grid) {
  if (grid.counts.empty() || grid.confidences.empty()) throw ConfigError("threshold search: empty candidate grid");
  if (windows.size() != truth.size()) throw DimensionError("threshold search: prediction and label counts differ");
  if (truth.empty()) throw DataError("threshold search: no validation images");
  std::sort(grid.counts.begin(), grid.counts.end());
  grid.counts.erase(std::unique(grid.counts.begin(), grid.counts.end()), grid.counts.end());
  std::sort(grid.confidences.begin(), grid.confidences.end());
  grid.confidences.erase(std::unique(grid.confidences.begin(), grid.confidences.end()), grid.confidences.end());
  for (std::size_t t : grid.counts) {
    if (t < 1) throw ConfigError("threshold search: count candidates must be at least 1");
  }
  for (double q : grid.confidences) {
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("threshold search: confidence candidates must lie in (0, 1)");
  }

  const std::size_t nq = grid.confidences.size();
  // counts[i][c][k]: windows of image i predicted as c with confidence >= q_k.
  std::vector<std::array<std::vector<std::size_t>, kNumClasses>> counts(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    for (auto& v : counts[i]) v.assign(nq, 0);
    for (const auto& w : windows[i]) {
      for (std::size_t k = 0; k < nq; ++k) counts[i][index_of(w.cls)][k] += w.confidence >= grid.confidences[k];
    }
  }

  SearchResult best;
  best.mean_f1 = -1.0;
  const std::size_t nt = grid.counts.size();
  std::vector<ClassId> predicted(truth.size());
  for (std::size_t t1 = 0; t1 < nt; ++t1) {
    for (std::size_t t2 = 0; t2 < nt; ++t2) {
      for (std::size_t t3 = 0; t3 < nt; ++t3) {
        for (std::size_t q1 = 0; q1 < nq; ++q1) {
          for (std::size_t q2 = 0; q2 < nq; ++q2) {
            for (std::size_t q3 = 0; q3 < nq; ++q3) {
              const std::array<std::size_t, kNumClasses> t{0, grid.counts[t1], grid.counts[t2], grid.counts[t3]};
              const std::array<std::size_t, kNumClasses> q{0, q1, q2, q3};
              for (std::size_t i = 0; i < truth.size(); ++i) {
                predicted[i] = ClassId::kNormal;
                for (ClassId c : kPriority) {
                  const std::size_t k = index_of(c);
                  if (counts[i][k][q[k]] >= t[k]) {
                    predicted[i] = c;
                    break;
                  }
                }
              }
              ConfusionMatrix cm;
              for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
              double f1 = 0.0;
              for (std::size_t c = 0; c < kNumClasses; ++c) f1 += per_class_metrics(cm, class_at(c)).f1;
              f1 /= kNumClasses;
              ++best.evaluated;
              if (f1 > best.mean_f1) {
                best.mean_f1 = f1;
                best.heuristic.min_count = t;
                best.heuristic.min_confidence = {0.0, grid.confidences[q1], grid.confidences[q2],
                                                 grid.confidences[q3]};
              }
            }
          }
        }
      }
    }
  }
  return best;
}

struct BaselineConfig {
  std::size_t crop_stride = 16;
  std::size_t normal_stride = 32;
  std::size_t epochs = 15;
  std::size_t batch_size = 32;
  bool augment = true;  // random quarter turns and mirroring of crops
  ThresholdGrid grid;

  void validate() const {
    if (crop_stride == 0 || normal_stride == 0) throw ConfigError("baseline: strides must be positive");
    if (epochs == 0 || batch_size == 0) throw ConfigError("baseline: epochs and batch_size must be positive");
    if (grid.counts.empty() || grid.confidences.empty()) throw ConfigError("baseline: empty threshold grid");
  }
};

namespace detail {

// Quarter turns k in 0..3, optionally mirrored, of a [3, s, s] crop.
inline std::vector<double> orient(const std::vector<double>& src, std::size_t s, int k, bool mirror) {
  std::vector<double> out(src.size());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < s; ++y) {
      for (std::size_t x = 0; x < s; ++x) {
        std::size_t sy = y, sx = mirror ? s - 1 - x : x;
        for (int r = 0; r < k; ++r) {
          const std::size_t ny = sx, nx = s - 1 - sy;
          sy = ny;
          sx = nx;
        }
        out[(c * s + y) * s + x] = src[(c * s + sy) * s + sx];
      }
    }
  }
  return out;
}

inline Tensor crop_batch(const std::vector<const std::vector<double>*>& crops, std::size_t s,
                         const ChannelStats& stats) {
  std::vector<double> data;
  data.reserve(crops.size() * 3 * s * s);
  for (const auto* crop : crops) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < s * s; ++i) data.push_back(((*crop)[c * s * s + i] - stats.mean[c]) / stats.std[c]);
    }
  }
  return Tensor::from_data({crops.size(), 3, s, s}, std::move(data));
}

}  // namespace detail

/// Mean cross-entropy and accuracy of the classifier over crops.
inline ValidationResult evaluate_crops(const CropClassifier& model, const std::vector<CropSample>& crops,
                                       std::size_t s, const ChannelStats& stats, std::size_t batch = 64) {
  ValidationResult r;
  if (crops.empty()) return r;
  NoGradGuard no_grad;
  for (std::size_t b = 0; b < crops.size(); b += batch) {
    std::vector<const std::vector<double>*> ptrs;
    for (std::size_t i = b; i < std::min(crops.size(), b + batch); ++i) ptrs.push_back(&crops[i].pixels);
    auto logits = model.forward(detail::crop_batch(ptrs, s, stats));
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const std::size_t label = index_of(crops[b + i].label);
      r.loss += cross_entropy(logits[i], label).item();
      std::vector<double> v(logits[i].data().begin(), logits[i].data().end());
      r.accuracy += argmax(v) == label;
    }
  }
  r.loss /= static_cast<double>(crops.size());
  r.accuracy /= static_cast<double>(crops.size());
  return r;
}

/// Trains the crop classifier with the shared schedule. Best checkpoint by
/// validation crop loss, as for the attention model.
class BaselineTrainer {
 public:
  using EpochCallback = std::function<void(const EpochLog&, const TrainOutcome&)>;

  BaselineTrainer(CropClassifier& model, TrainConfig train, BaselineConfig baseline, std::size_t crop_size,
                  std::string config_text)
      : model_(model),
        train_(std::move(train)),
        baseline_(std::move(baseline)),
        crop_(crop_size),
        config_text_(std::move(config_text)) {
    train_.validate();
    baseline_.validate();
  }

  TrainOutcome run(const std::vector<CropSample>& train_set, const std::vector<CropSample>& val_set,
                   const ChannelStats& stats, const Checkpoint* resume = nullptr, const EpochCallback& on_epoch = {}) {
    if (train_set.empty()) throw DataError("baseline: no training crops");
    std::set<std::string> train_groups;
    for (const auto& c : train_set) train_groups.insert(c.group_id);
    for (const auto& c : val_set) {
      if (train_groups.count(c.group_id)) throw LeakageError("group '" + c.group_id + "' has crops in train and val");
    }
    Adam adam(model_.parameters());
    TrainOutcome outcome;
    ChannelStats used = stats;
    std::size_t start = 0;
    if (resume != nullptr) {
      restore(model_.parameters(), resume->weights);
      restore_optimizer(adam, resume->optimizer, resume->optimizer_step);
      used = resume->stats;
      start = resume->epoch;
      outcome.best_val_loss = detail::load_best_loss(*resume);
      outcome.best = *resume;
    }
    for (std::size_t epoch = start; epoch < baseline_.epochs; ++epoch) {
      const double lr = lr_at(epoch, train_.schedule);
      Rng shuffle_rng = make_rng(train_.seed, Stream::kShuffle, epoch);
      Rng augment_rng = make_rng(train_.seed, Stream::kAugment, epoch);
      std::vector<std::size_t> order(train_set.size());
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      double train_loss = 0.0;
      for (std::size_t b = 0; b < order.size(); b += baseline_.batch_size) {
        const std::size_t e = std::min(order.size(), b + baseline_.batch_size);
        std::vector<std::vector<double>> views;
        views.reserve(e - b);
        for (std::size_t i = b; i < e; ++i) {
          const auto& src = train_set[order[i]].pixels;
          if (baseline_.augment) {
            const auto bits = augment_rng();
            views.push_back(detail::orient(src, crop_, static_cast<int>(bits & 3u), (bits >> 2) & 1u));
          } else {
            views.push_back(src);
          }
        }
        std::vector<const std::vector<double>*> ptrs;
        for (const auto& v : views) ptrs.push_back(&v);
        adam.zero_grad();
        auto logits = model_.forward(detail::crop_batch(ptrs, crop_, used));
        std::vector<Tensor> losses;
        for (std::size_t i = 0; i < logits.size(); ++i) {
          losses.push_back(cross_entropy(logits[i], index_of(train_set[order[b + i]].label)));
          train_loss += losses.back().item();
        }
        backward(scale(sum(concat(losses)), 1.0 / static_cast<double>(losses.size())));
        adam.step(lr);
        ++outcome.steps;
      }
      EpochLog entry{epoch, lr, train_loss / static_cast<double>(train_set.size()), 0.0, 0.0};
      const ValidationResult val = evaluate_crops(model_, val_set, crop_, used);
      entry.val_loss = val_set.empty() ? entry.train_loss : val.loss;
      entry.val_acc = val.accuracy;
      outcome.log.push_back(entry);
      Checkpoint c;
      c.epoch = epoch + 1;
      c.optimizer_step = adam.steps();
      c.weights = snapshot(model_.parameters());
      c.optimizer = snapshot_optimizer(adam);
      c.stats = used;
      c.config = config_text_;
      outcome.last = std::move(c);
      if (entry.val_loss < outcome.best_val_loss) {
        outcome.best_val_loss = entry.val_loss;
        outcome.best = outcome.last;
      }
      detail::store_best_loss(outcome.last, outcome.best_val_loss);
      detail::store_best_loss(outcome.best, outcome.best_val_loss);
      if (on_epoch) on_epoch(entry, outcome);
    }
    if (outcome.log.empty() && resume != nullptr) outcome.last = *resume;
    return outcome;
  }

 private:
  CropClassifier& model_;
  TrainConfig train_;
  BaselineConfig baseline_;
  std::size_t crop_;
  std::string config_text_;
};

/// Classifies every tissue window of an image at stride equal to the crop
/// size, the same grid the attention model sees.
inline std::vector<WindowPrediction> predict_windows(const CropClassifier& model, const Image& image,
                                                     const DataConfig& data, const ChannelStats& stats) {
  NoGradGuard no_grad;
  const CellGrid grid = tile(image, data.cell_size, 0, data.white_threshold, data.tissue_fraction);
  std::vector<std::vector<double>> cells;
  for (std::size_t i = 0; i < grid.rows; ++i) {
    for (std::size_t j = 0; j < grid.cols; ++j) {
      if (!grid.has_tissue(i, j)) continue;
      cells.emplace_back(grid.cell(i, j), grid.cell(i, j) + grid.cell_values());
    }
  }
  std::vector<WindowPrediction> out;
  if (cells.empty()) return out;
  std::vector<const std::vector<double>*> ptrs;
  for (const auto& c : cells) ptrs.push_back(&c);
  for (const Tensor& logits : model.forward(detail::crop_batch(ptrs, data.cell_size, stats))) {
    const std::vector<double> p = softmax_values(logits.data());
    const std::size_t k = argmax(p);
    out.push_back({class_at(k), p[k]});
  }
  return out;
}

}  // namespace gridattn
