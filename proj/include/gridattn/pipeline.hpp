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

// Corpus-level workflows shared by the command-line tool and the acceptance
// runner: generation, training of either model, evaluation and comparison.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gridattn/baseline.hpp"
#include "gridattn/datagen.hpp"
#include "gridattn/dataset.hpp"
#include "gridattn/metrics.hpp"
#include "gridattn/model.hpp"
#include "gridattn/parallel.hpp"
#include "gridattn/run_config.hpp"
#include "gridattn/trainer.hpp"

namespace gridattn {

enum class ModelKind { kAttention, kBaseline };

inline std::string_view model_kind_name(ModelKind k) { return k == ModelKind::kAttention ? "attention" : "baseline"; }

inline ModelKind parse_model_kind(std::string_view name) {
  if (name == "attention") return ModelKind::kAttention;
  if (name == "baseline") return ModelKind::kBaseline;
  throw ConfigError("unknown model '" + std::string(name) + "', want attention or baseline");
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace detail

// ---------------------------------------------------------------- generate

inline std::string format_split_summary(const std::vector<IndexRecord>& records) {
  const auto table = split_summary(records);
  std::ostringstream os;
  os << std::left << std::setw(8) << "split";
  for (auto title : kClassTitles) os << std::right << std::setw(19) << title;
  os << std::setw(8) << "total" << "\n";
  std::array<std::size_t, kNumClasses> column{};
  for (std::size_t s = 0; s < 3; ++s) {
    std::size_t row = 0;
    os << std::left << std::setw(8) << kSplitNames[s] << std::right;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      os << std::setw(19) << table[s][c];
      row += table[s][c];
      column[c] += table[s][c];
    }
    os << std::setw(8) << row << "\n";
  }
  os << std::left << std::setw(8) << "total" << std::right;
  for (std::size_t n : column) os << std::setw(19) << n;
  os << std::setw(8) << records.size() << "\n";
  return os.str();
}

// ------------------------------------------------------------------ corpus

struct Corpus {
  std::filesystem::path dir;
  std::vector<IndexRecord> records;
  std::optional<std::size_t> cell_size;  // from spec.txt when present
};

inline Corpus open_corpus(const std::filesystem::path& dir) {
  Corpus c;
  c.dir = dir;
  c.records = read_index(dir / "index.csv");
  check_group_disjoint(c.records);
  if (std::filesystem::exists(dir / "spec.txt")) {
    Settings s = Settings::load(dir / "spec.txt");
    c.cell_size = CorpusSpec::from_settings(s).cell_size;
  }
  return c;
}

inline void check_cell_size(const Corpus& corpus, const RunConfig& cfg) {
  if (corpus.cell_size && *corpus.cell_size != cfg.data.cell_size) {
    throw IncompatibleError("corpus " + corpus.dir.string() + " was generated for cell_size " +
                            std::to_string(*corpus.cell_size) + " but the model uses cell_size " +
                            std::to_string(cfg.data.cell_size));
  }
}

inline std::vector<SlideImage> slides_of(const std::vector<LoadedImage>& images) {
  std::vector<SlideImage> out;
  out.reserve(images.size());
  for (const auto& i : images) out.push_back(i.slide);
  return out;
}

// ------------------------------------------------------------------- train

struct TrainRequest {
  RunConfig config;
  ModelKind kind = ModelKind::kAttention;
  std::filesystem::path corpus;
  std::filesystem::path out;
  std::optional<std::filesystem::path> resume;
};

struct TrainSummary {
  TrainOutcome outcome;
  std::optional<SearchResult> search;  // baseline only
};

namespace detail {

// Writes epoch rows to train_log.csv and keeps last/best checkpoints on
// disk after every epoch. A resumed run appends to the existing log.
class RunRecorder {
 public:
  RunRecorder(const std::filesystem::path& out, std::ostream* progress, std::size_t epochs, bool resumed)
      : out_(out), progress_(progress), epochs_(epochs) {
    const auto log = out_ / "train_log.csv";
    const bool fresh = !resumed || !std::filesystem::exists(log);
    log_.open(log, std::ios::binary | (fresh ? std::ios::trunc : std::ios::app));
    if (!log_) throw IoError("cannot write " + log.string());
    if (fresh) log_ << kTrainLogHeader << "\n";
  }

  void operator()(const EpochLog& e, const TrainOutcome& o) {
    log_ << format_log_row(e) << "\n";
    log_.flush();
    save_checkpoint(out_ / "last.gatt", o.last);
    const bool improved = o.best.epoch == o.last.epoch;
    if (improved) save_checkpoint(out_ / "best.gatt", o.best);
    if (progress_ != nullptr) {
      char lr[32];
      std::snprintf(lr, sizeof lr, "%.4g", e.lr);
      *progress_ << "epoch " << e.epoch + 1 << "/" << epochs_ << "  lr " << lr << "  train_loss "
                 << detail::fixed(e.train_loss) << "  val_loss " << detail::fixed(e.val_loss) << "  val_acc " << detail::fixed(e.val_acc)
                 << (improved ? "  *" : "") << std::endl;
    }
  }

 private:
  std::filesystem::path out_;
  std::ostream* progress_;
  std::size_t epochs_;
  std::ofstream log_;
};

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

}  // namespace detail

/// Trains the requested model on the corpus' train split, selecting on val.
/// Writes config.resolved.txt, train_log.csv, last.gatt and best.gatt under
/// `out`, plus heuristic.txt for the baseline.
inline TrainSummary train_run(const TrainRequest& req, std::ostream* progress = nullptr) {
  const RunConfig& cfg = req.config;
  cfg.validate();
  const Corpus corpus = open_corpus(req.corpus);
  check_cell_size(corpus, cfg);
  detail::ensure_dir(req.out);

  std::optional<Checkpoint> resume;
  if (req.resume) {
    resume = load_checkpoint(*req.resume);
    const bool baseline_ckpt = resume->find("head.weight") != nullptr;
    if (baseline_ckpt != (req.kind == ModelKind::kBaseline)) {
      throw IncompatibleError("checkpoint " + req.resume->string() + " does not hold a " +
                              std::string(model_kind_name(req.kind)) + " model");
    }
  }
  const std::string config_text = cfg.to_text();
  detail::write_text(req.out / "config.resolved.txt", config_text);

  const auto train_images = load_split(corpus.dir, corpus.records, Split::kTrain, cfg.data.white_threshold);
  const auto val_images = load_split(corpus.dir, corpus.records, Split::kVal, cfg.data.white_threshold);
  if (progress != nullptr) {
    *progress << "training " << model_kind_name(req.kind) << " on " << train_images.size() << " images, validating on "
              << val_images.size() << std::endl;
  }

  TrainSummary summary;
  if (req.kind == ModelKind::kAttention) {
    AttentionModel model(cfg.extractor, cfg.attention, cfg.train.seed);
    AttentionTrainer trainer(model, cfg.train, cfg.data, config_text);
    detail::RunRecorder recorder(req.out, progress, cfg.train.epochs, resume.has_value());
    summary.outcome =
        trainer.run(slides_of(train_images), slides_of(val_images), resume ? &*resume : nullptr, std::ref(recorder));
    return summary;
  }

  const std::size_t crop = cfg.data.cell_size;
  HarvestResult train_crops = harvest_crops(train_images, crop, cfg.baseline.crop_stride, cfg.baseline.normal_stride);
  HarvestResult val_crops = harvest_crops(val_images, crop, cfg.baseline.crop_stride, cfg.baseline.normal_stride);
  if (progress != nullptr) {
    for (const auto& w : train_crops.warnings) *progress << "warning: " << w << "\n";
    *progress << "harvested " << train_crops.crops.size() << " training and " << val_crops.crops.size()
              << " validation crops" << std::endl;
  }
  std::vector<Image> pixels;
  for (const auto& i : train_images) pixels.push_back(i.slide.pixels);
  const ChannelStats stats = compute_channel_stats(pixels, cfg.data.white_threshold);

  CropClassifier model(cfg.extractor, kNumClasses, cfg.train.seed);
  BaselineTrainer trainer(model, cfg.train, cfg.baseline, crop, config_text);
  detail::RunRecorder recorder(req.out, progress, cfg.baseline.epochs, resume.has_value());
  summary.outcome =
      trainer.run(train_crops.crops, val_crops.crops, stats, resume ? &*resume : nullptr, std::ref(recorder));

  // Thresholds are tuned on whole validation images with the selected model.
  restore(model.parameters(), summary.outcome.best.weights);
  const auto& tune = val_images.empty() ? train_images : val_images;
  std::vector<std::vector<WindowPrediction>> windows(tune.size());
  std::vector<ClassId> truth;
  for (const auto& i : tune) truth.push_back(i.slide.label);
  parallel_for(tune.size(), resolve_threads(cfg.threads), [&](std::size_t i) {
    windows[i] = predict_windows(model, tune[i].slide.pixels, cfg.data, summary.outcome.best.stats);
  });
  summary.search = search_thresholds(windows, truth, cfg.baseline.grid);
  detail::write_text(req.out / "heuristic.txt", summary.search->heuristic.to_text());
  if (progress != nullptr) {
    *progress << "threshold search: " << summary.search->evaluated << " candidates, best mean F1 "
              << detail::fixed(summary.search->mean_f1) << " on " << (val_images.empty() ? "train" : "val") << "\n"
              << summary.search->heuristic.to_text() << std::flush;
  }
  return summary;
}

// -------------------------------------------------------------------- eval

struct EvalRequest {
  std::filesystem::path checkpoint;
  std::filesystem::path corpus;
  Split split = Split::kTest;
  std::filesystem::path out;
  bool dump_attention = false;
  std::optional<std::filesystem::path> heuristic;  // baseline; default: next to the checkpoint
};

struct ImageResult {
  std::string id;
  ClassId truth = ClassId::kNormal;
  ClassId predicted = ClassId::kNormal;
  std::vector<double> probs;
  std::vector<Localization> localization;  // per head; attention model only
};

struct EvalSummary {
  ModelKind kind = ModelKind::kAttention;
  MetricsReport report;
  std::vector<ImageResult> images;
  double seconds = 0.0;
};

inline constexpr std::string_view kPredictionsHeader =
    "id,truth,pred,p_normal,p_be_no_dysplasia,p_be_with_dysplasia,p_adenocarcinoma";

inline void write_predictions_csv(const std::filesystem::path& path, const std::vector<ImageResult>& images) {
  auto os = detail::open_out(path);
  os << kPredictionsHeader << "\n";
  for (const auto& r : images) {
    os << r.id << "," << class_name(r.truth) << "," << class_name(r.predicted);
    for (double p : r.probs) os << "," << format_double(p);
    os << "\n";
  }
}

inline std::vector<ImageResult> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read predictions " + path.string());
  std::string line;
  if (!std::getline(is, line) || trim(line) != kPredictionsHeader) {
    throw DataError(path.string() + ": unexpected header");
  }
  std::vector<ImageResult> out;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(trim(line));
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 3 + kNumClasses) throw DataError(path.string() + ": malformed row '" + line + "'");
    ImageResult r;
    r.id = f[0];
    r.truth = parse_class(f[1]);
    r.predicted = parse_class(f[2]);
    try {
      for (std::size_t c = 0; c < kNumClasses; ++c) r.probs.push_back(std::stod(f[3 + c]));
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ": malformed row '" + line + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline constexpr std::string_view kLocalizationHeader = "id,truth,pred,head,ratio,defined,lesion_cells";

/// Evaluates a checkpoint on one split and writes metrics.csv,
/// confusion.csv, roc_<class>.csv, report.txt and predictions.csv under
/// `out`. With dump_attention, also attention/<id>_head<h>.png and
/// localization.csv.
inline EvalSummary eval_run(const EvalRequest& req, std::ostream* progress = nullptr) {
  const Checkpoint ckpt = load_checkpoint(req.checkpoint);
  RunConfig cfg;
  try {
    cfg = RunConfig::parse(ckpt.config, req.checkpoint.string());
  } catch (const ConfigError& e) {
    throw IncompatibleError(std::string("checkpoint config is not readable: ") + e.what());
  }
  const Corpus corpus = open_corpus(req.corpus);
  check_cell_size(corpus, cfg);
  detail::ensure_dir(req.out);

  EvalSummary summary;
  summary.kind = ckpt.find("head.weight") != nullptr ? ModelKind::kBaseline : ModelKind::kAttention;
  const auto images = load_split(corpus.dir, corpus.records, req.split, cfg.data.white_threshold);
  if (images.empty()) throw DataError("split '" + std::string(split_name(req.split)) + "' is empty");
  summary.images.resize(images.size());
  const std::size_t threads = resolve_threads(cfg.threads);
  const std::size_t stride = cfg.data.cell_size - cfg.data.overlap;
  const auto t0 = std::chrono::steady_clock::now();

  if (summary.kind == ModelKind::kAttention) {
    AttentionModel model(cfg.extractor, cfg.attention, cfg.train.seed);
    restore(model.parameters(), ckpt.weights);
    parallel_for(images.size(), threads, [&](std::size_t i) {
      const LoadedImage& img = images[i];
      Prediction p = predict(model, img.slide.pixels, cfg.data, ckpt.stats);
      ImageResult& r = summary.images[i];
      r.id = img.record.id;
      r.truth = img.slide.label;
      r.predicted = class_at(argmax(p.probs));
      r.probs = p.probs;
      for (const Tensor& map : p.maps) {
        r.localization.push_back(localization_score(map, img.boxes, img.slide.label, cfg.data.cell_size, stride));
      }
      if (req.dump_attention) export_attention(p.maps, req.out / "attention" / img.record.id);
    });
  } else {
    const auto heuristic_path = req.heuristic ? *req.heuristic : req.checkpoint.parent_path() / "heuristic.txt";
    if (!std::filesystem::exists(heuristic_path)) {
      throw DataError("baseline heuristic not found at " + heuristic_path.string());
    }
    Settings hs = Settings::load(heuristic_path);
    const Heuristic heuristic = Heuristic::from_settings(hs);
    CropClassifier model(cfg.extractor, kNumClasses, cfg.train.seed);
    restore(model.parameters(), ckpt.weights);
    parallel_for(images.size(), threads, [&](std::size_t i) {
      const LoadedImage& img = images[i];
      const auto windows = predict_windows(model, img.slide.pixels, cfg.data, ckpt.stats);
      ImageResult& r = summary.images[i];
      r.id = img.record.id;
      r.truth = img.slide.label;
      r.predicted = aggregate(windows, heuristic);
      r.probs.assign(kNumClasses, 0.0);
      r.probs[index_of(r.predicted)] = 1.0;
    });
  }
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::vector<ClassId> truth, predicted;
  std::vector<std::vector<double>> probs;
  for (const auto& r : summary.images) {
    truth.push_back(r.truth);
    predicted.push_back(r.predicted);
    probs.push_back(r.probs);
  }
  summary.report =
      summary.kind == ModelKind::kAttention ? build_report(truth, probs) : build_report(truth, predicted);

  write_metrics_csv(req.out / "metrics.csv", summary.report);
  write_confusion_csv(req.out / "confusion.csv", summary.report.confusion);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (summary.report.roc_curves[c].defined) {
      write_roc_csv(req.out / ("roc_" + std::string(kClassNames[c]) + ".csv"), summary.report.roc_curves[c]);
    }
  }
  write_predictions_csv(req.out / "predictions.csv", summary.images);
  const std::string title = std::string(model_kind_name(summary.kind)) + " model, " +
                            std::string(split_name(req.split)) + " split (" + std::to_string(images.size()) +
                            " images)";
  const std::string report = format_report(summary.report, title);
  detail::write_text(req.out / "report.txt", report);

  if (req.dump_attention && summary.kind == ModelKind::kAttention) {
    auto os = detail::open_out(req.out / "localization.csv");
    os << kLocalizationHeader << "\n";
    for (const auto& r : summary.images) {
      for (std::size_t h = 0; h < r.localization.size(); ++h) {
        const auto& l = r.localization[h];
        os << r.id << "," << class_name(r.truth) << "," << class_name(r.predicted) << "," << h << ","
           << (l.defined ? format_double(l.ratio) : "") << "," << (l.defined ? 1 : 0) << "," << l.lesion_cells
           << "\n";
      }
    }
  }
  if (progress != nullptr) {
    *progress << report;
    *progress << "timing: " << images.size() << " images in " << detail::fixed(summary.seconds, 2) << " s ("
              << detail::fixed(summary.seconds / static_cast<double>(images.size()), 3) << " s/image, " << threads
              << (threads == 1 ? " thread" : " threads") << ")" << std::endl;
  }
  return summary;
}

/// Best-head localization ratio per correctly classified non-normal image.
inline std::vector<double> best_head_localization(const std::vector<ImageResult>& images) {
  std::vector<double> out;
  for (const auto& r : images) {
    if (r.truth == ClassId::kNormal || r.predicted != r.truth) continue;
    bool any = false;
    double best = 0.0;
    for (const auto& l : r.localization) {
      if (!l.defined) continue;
      best = any ? std::max(best, l.ratio) : l.ratio;
      any = true;
    }
    if (any) out.push_back(best);
  }
  return out;
}

// ----------------------------------------------------------------- compare

/// Reads predictions.csv from two eval directories and formats the paired
/// per-class table. Both must cover the same images with the same labels.
inline std::string compare_runs(const std::filesystem::path& a, const std::string& name_a,
                                const std::filesystem::path& b, const std::string& name_b) {
  auto pa = read_predictions_csv(a / "predictions.csv");
  auto pb = read_predictions_csv(b / "predictions.csv");
  auto by_id = [](std::vector<ImageResult>& v) {
    std::sort(v.begin(), v.end(), [](const ImageResult& x, const ImageResult& y) { return x.id < y.id; });
  };
  by_id(pa);
  by_id(pb);
  if (pa.size() != pb.size()) throw DataError("compare: runs cover different numbers of images");
  std::vector<ClassId> truth, pred_a, pred_b;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].id != pb[i].id || pa[i].truth != pb[i].truth) {
      throw DataError("compare: runs disagree on image '" + pa[i].id + "'");
    }
    truth.push_back(pa[i].truth);
    pred_a.push_back(pa[i].predicted);
    pred_b.push_back(pb[i].predicted);
  }
  return format_paired_table(build_report(truth, pred_a), name_a, build_report(truth, pred_b), name_b);
}

}  // namespace gridattn
