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

// One-vs-rest metrics, confusion matrices, ROC curves, attention map export
// and attention localization scoring.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "gridattn/classes.hpp"
#include "gridattn/dataset.hpp"
#include "gridattn/error.hpp"
#include "gridattn/image.hpp"
#include "gridattn/settings.hpp"
#include "gridattn/tensor.hpp"

namespace gridattn {

struct ConfusionMatrix {
  // Rows are ground truth, columns are predictions.
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

  void add(ClassId truth, ClassId predicted) { ++counts[index_of(truth)][index_of(predicted)]; }

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& row : counts) {
      for (std::size_t v : row) n += v;
    }
    return n;
  }

  std::size_t trace() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) n += counts[i][i];
    return n;
  }
};

struct ClassMetrics {
  double accuracy = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  // Set when a ratio had a zero denominator and was reported as 0.
  bool recall_undefined = false;
  bool precision_undefined = false;
  bool f1_undefined = false;
};

/// Class `c` against the rest.
inline ClassMetrics per_class_metrics(const ConfusionMatrix& cm, ClassId c) {
  const std::size_t total = cm.total();
  if (total == 0) throw std::invalid_argument("per_class_metrics: empty confusion matrix");
  const std::size_t k = index_of(c);
  ClassMetrics m;
  m.tp = cm.counts[k][k];
  for (std::size_t j = 0; j < kNumClasses; ++j) {
    if (j == k) continue;
    m.fn += cm.counts[k][j];
    m.fp += cm.counts[j][k];
  }
  m.tn = total - m.tp - m.fn - m.fp;
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(total);
  auto ratio = [](std::size_t num, std::size_t den, bool& undefined) {
    undefined = den == 0;
    return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.recall = ratio(m.tp, m.tp + m.fn, m.recall_undefined);
  m.precision = ratio(m.tp, m.tp + m.fp, m.precision_undefined);
  m.f1_undefined = m.precision + m.recall == 0.0;
  m.f1 = m.f1_undefined ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
  bool defined = false;
};

/// Sweeps the threshold down through the distinct scores; equal scores move
/// together as one step. AUC by the trapezoid rule.
inline RocCurve roc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw DimensionError("roc: scores and labels differ in length");
  RocCurve curve;
  const auto pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
  const double neg = static_cast<double>(positive.size()) - pos;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  if (pos == 0.0 || neg == 0.0) return curve;
  curve.defined = true;
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (positive[order[i]] ? tp : fp) += 1.0;
      ++i;
    }
    const RocPoint prev = curve.points.back();
    const RocPoint next{s, fp / neg, tp / pos};
    curve.auc += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) / 2.0;
    curve.points.push_back(next);
  }
  return curve;
}

struct MetricsReport {
  ConfusionMatrix confusion;
  std::array<ClassMetrics, kNumClasses> per_class{};
  std::array<RocCurve, kNumClasses> roc_curves{};
  double mean_accuracy = 0.0;
  double mean_recall = 0.0;
  double mean_precision = 0.0;
  double mean_f1 = 0.0;
  double mean_auc = 0.0;
};

/// `probs[i]` holds the class probabilities for image i; the prediction is
/// the most probable class.
inline MetricsReport build_report(const std::vector<ClassId>& truth, const std::vector<std::vector<double>>& probs) {
  if (truth.size() != probs.size()) throw DimensionError("build_report: label and score counts differ");
  if (truth.empty()) throw DataError("build_report: nothing to evaluate");
  MetricsReport r;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (probs[i].size() != kNumClasses) throw DimensionError("build_report: expected 4 class scores");
    const auto best = static_cast<std::size_t>(std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin());
    r.confusion.add(truth[i], class_at(best));
  }
  std::size_t defined_auc = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const ClassMetrics m = per_class_metrics(r.confusion, class_at(c));
    r.per_class[c] = m;
    r.mean_accuracy += m.accuracy / kNumClasses;
    r.mean_recall += m.recall / kNumClasses;
    r.mean_precision += m.precision / kNumClasses;
    r.mean_f1 += m.f1 / kNumClasses;
    std::vector<double> scores;
    std::vector<bool> positive;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      scores.push_back(probs[i][c]);
      positive.push_back(index_of(truth[i]) == c);
    }
    r.roc_curves[c] = roc(scores, positive);
    if (r.roc_curves[c].defined) {
      r.mean_auc += r.roc_curves[c].auc;
      ++defined_auc;
    }
  }
  if (defined_auc > 0) r.mean_auc /= static_cast<double>(defined_auc);
  return r;
}

/// Report for hard predictions only; ROC curves are left undefined.
inline MetricsReport build_report(const std::vector<ClassId>& truth, const std::vector<ClassId>& predicted) {
  std::vector<std::vector<double>> onehot;
  for (ClassId p : predicted) {
    std::vector<double> v(kNumClasses, 0.0);
    v[index_of(p)] = 1.0;
    onehot.push_back(std::move(v));
  }
  MetricsReport r = build_report(truth, onehot);
  r.roc_curves = {};
  r.mean_auc = 0.0;
  return r;
}

namespace detail {

inline std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

inline void ensure_parent(const std::filesystem::path& path) {
  if (!path.has_parent_path()) return;
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  ensure_parent(path);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

}  // namespace detail

inline void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& r) {
  auto os = detail::open_out(path);
  os << "class,accuracy,recall,precision,f1,auc,tp,fp,fn,tn,flags\n";
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto& m = r.per_class[c];
    std::string flags;
    if (m.recall_undefined) flags += "recall_undefined;";
    if (m.precision_undefined) flags += "precision_undefined;";
    if (m.f1_undefined) flags += "f1_undefined;";
    if (!r.roc_curves[c].defined) flags += "auc_undefined;";
    if (!flags.empty()) flags.pop_back();
    os << kClassNames[c] << "," << format_double(m.accuracy) << "," << format_double(m.recall) << ","
       << format_double(m.precision) << "," << format_double(m.f1) << ","
       << (r.roc_curves[c].defined ? format_double(r.roc_curves[c].auc) : "") << "," << m.tp << "," << m.fp << ","
       << m.fn << "," << m.tn << "," << flags << "\n";
  }
  os << "mean," << format_double(r.mean_accuracy) << "," << format_double(r.mean_recall) << ","
     << format_double(r.mean_precision) << "," << format_double(r.mean_f1) << "," << format_double(r.mean_auc)
     << ",,,,,\n";
}

inline void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  auto os = detail::open_out(path);
  os << "truth\\predicted";
  for (auto name : kClassNames) os << "," << name;
  os << "\n";
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    os << kClassNames[i];
    for (std::size_t j = 0; j < kNumClasses; ++j) os << "," << cm.counts[i][j];
    os << "\n";
  }
}

inline void write_roc_csv(const std::filesystem::path& path, const RocCurve& curve) {
  auto os = detail::open_out(path);
  os << "threshold,fpr,tpr\n";
  for (const auto& p : curve.points) {
    os << (std::isinf(p.threshold) ? std::string("inf") : format_double(p.threshold)) << "," << format_double(p.fpr)
       << "," << format_double(p.tpr) << "\n";
  }
}

inline std::string format_report(const MetricsReport& r, const std::string& title) {
  std::string out = title + "\n";
  char line[160];
  std::snprintf(line, sizeof(line), "%-20s %9s %9s %9s %9s %9s\n", "Class", "Accuracy", "Recall", "Precision", "F1",
                "AUC");
  out += line;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto& m = r.per_class[c];
    std::snprintf(line, sizeof(line), "%-20s %9.3f %9.3f %9.3f %9.3f %9s\n", std::string(kClassTitles[c]).c_str(),
                  m.accuracy, m.recall, m.precision, m.f1,
                  r.roc_curves[c].defined ? detail::fixed(r.roc_curves[c].auc, 3).c_str() : "n/a");
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-20s %9.3f %9.3f %9.3f %9.3f %9.3f\n", "Mean", r.mean_accuracy, r.mean_recall,
                r.mean_precision, r.mean_f1, r.mean_auc);
  out += line;
  out += "\nConfusion matrix (rows truth, columns predicted)\n";
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    std::snprintf(line, sizeof(line), "%-20s", std::string(kClassTitles[i]).c_str());
    out += line;
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      std::snprintf(line, sizeof(line), " %6zu", r.confusion.counts[i][j]);
      out += line;
    }
    out += "\n";
  }
  return out;
}

/// Two models side by side, one row per class plus the mean row.
inline std::string format_paired_table(const MetricsReport& a, const std::string& name_a, const MetricsReport& b,
                                       const std::string& name_b) {
  std::string out;
  char line[200];
  std::snprintf(line, sizeof(line), "%-20s %-16s %9s %9s %9s %9s\n", "Class", "Model", "Accuracy", "Recall",
                "Precision", "F1");
  out += line;
  auto row = [&](const std::string& cls, const std::string& model, double acc, double rec, double prec, double f1) {
    std::snprintf(line, sizeof(line), "%-20s %-16s %9.2f %9.2f %9.2f %9.2f\n", cls.c_str(), model.c_str(), acc, rec,
                  prec, f1);
    out += line;
  };
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::string cls(kClassTitles[c]);
    for (const auto& [r, name] : {std::pair{&a, name_a}, std::pair{&b, name_b}}) {
      const auto& m = r->per_class[c];
      row(cls, name, m.accuracy, m.recall, m.precision, m.f1);
    }
  }
  for (const auto& [r, name] : {std::pair{&a, name_a}, std::pair{&b, name_b}}) {
    row("Mean", name, r->mean_accuracy, r->mean_recall, r->mean_precision, r->mean_f1);
  }
  return out;
}

/// Byte value for attention weight `a` under a map whose maximum is `max`.
inline std::uint8_t attention_byte(double a, double max) {
  if (!(max > 0.0)) return 0;
  return static_cast<std::uint8_t>(std::lround(std::clamp(255.0 * a / max, 0.0, 255.0)));
}

/// Writes each [rows, cols] map as an 8-bit grayscale PNG scaled by its own
/// maximum (white is high weight), plus "<prefix>_max.txt" holding each
/// map's maximum before scaling. Returns the written image paths.
inline std::vector<std::filesystem::path> export_attention(const std::vector<Tensor>& maps,
                                                           const std::filesystem::path& prefix) {
  std::vector<std::filesystem::path> written;
  std::string sidecar = "head,max\n";
  for (std::size_t h = 0; h < maps.size(); ++h) {
    const Tensor& m = maps[h];
    if (m.ndim() != 2) throw DimensionError("export_attention: maps must be 2D");
    if (!m.all_finite()) throw std::invalid_argument("export_attention: map has non-finite values");
    const double max = *std::max_element(m.data().begin(), m.data().end());
    Image img(m.dim(0), m.dim(1), 1);
    for (std::size_t i = 0; i < m.numel(); ++i) img.pixels[i] = attention_byte(m[i], max) / 255.0;
    const auto path = std::filesystem::path(prefix.string() + "_head" + std::to_string(h) + ".png");
    detail::ensure_parent(path);
    try {
      write_png(path, img);
    } catch (const std::exception& e) {
      throw IoError("cannot write attention map " + path.string() + ": " + e.what());
    }
    written.push_back(path);
    sidecar += std::to_string(h) + "," + format_double(max) + "\n";
  }
  auto os = detail::open_out(prefix.string() + "_max.txt");
  os << sidecar;
  return written;
}

struct Localization {
  double ratio = 0.0;  // +inf when every unit of weight sits on lesion cells
  bool defined = false;
  std::size_t lesion_cells = 0;
};

/// Mean attention over cells that intersect a box of class `target`,
/// divided by the mean over all other cells.
inline Localization localization_score(const Tensor& map, const std::vector<RoiBox>& boxes, ClassId target,
                                       std::size_t cell_size, std::size_t stride) {
  if (map.ndim() != 2) throw DimensionError("localization_score: map must be 2D");
  const std::size_t rows = map.dim(0), cols = map.dim(1);
  Localization out;
  double lesion = 0.0, rest = 0.0;
  std::size_t n_rest = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t y0 = i * stride, x0 = j * stride;
      bool hit = false;
      for (const auto& b : boxes) {
        if (b.cls != target) continue;
        hit |= x0 < b.box.x + b.box.w && b.box.x < x0 + cell_size && y0 < b.box.y + b.box.h && b.box.y < y0 + cell_size;
      }
      const double a = map[i * cols + j];
      if (hit) {
        lesion += a;
        ++out.lesion_cells;
      } else {
        rest += a;
        ++n_rest;
      }
    }
  }
  if (out.lesion_cells == 0 || n_rest == 0) return out;
  out.defined = true;
  const double mean_lesion = lesion / static_cast<double>(out.lesion_cells);
  const double mean_rest = rest / static_cast<double>(n_rest);
  out.ratio = mean_rest > 0.0 ? mean_lesion / mean_rest : std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace gridattn
