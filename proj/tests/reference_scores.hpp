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

// Reference per-class precision, recall and F1 for the two models, and a
// confusion matrix construction that realizes a given precision/recall.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gridattn/metrics.hpp"

namespace gridattn::testing {

struct ReferenceRow {
  std::string model;
  ClassId cls;
  double precision;
  double recall;
  double f1;
};

inline const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows = {
      {"attention", ClassId::kNormal, 0.68, 0.69, 0.68},
      {"attention", ClassId::kBeNoDysplasia, 0.68, 0.77, 0.72},
      {"attention", ClassId::kBeWithDysplasia, 0.50, 0.21, 0.30},
      {"attention", ClassId::kAdenocarcinoma, 0.63, 0.71, 0.67},
      {"sliding-window", ClassId::kNormal, 0.60, 0.62, 0.61},
      {"sliding-window", ClassId::kBeNoDysplasia, 0.87, 0.43, 0.58},
      {"sliding-window", ClassId::kBeWithDysplasia, 0.16, 0.36, 0.22},
      {"sliding-window", ClassId::kAdenocarcinoma, 0.65, 0.52, 0.58},
  };
  return rows;
}

inline constexpr double kReferenceMeanF1Attention = 0.59;
inline constexpr double kReferenceMeanF1Baseline = 0.50;

/// A 4x4 matrix in which class `c` has the given precision and recall
/// against the rest, up to integer rounding at a scale of 1e6.
inline ConfusionMatrix matrix_with(ClassId c, double precision, double recall) {
  const double tp = 1e6;
  const auto fp = static_cast<std::size_t>(std::llround(tp * (1.0 - precision) / precision));
  const auto fn = static_cast<std::size_t>(std::llround(tp * (1.0 - recall) / recall));
  const std::size_t k = index_of(c);
  const std::size_t other = (k + 1) % kNumClasses;
  const std::size_t third = (k + 2) % kNumClasses;
  ConfusionMatrix cm;
  cm.counts[k][k] = static_cast<std::size_t>(tp);
  cm.counts[k][other] = fn;
  cm.counts[other][k] = fp;
  cm.counts[third][third] = 500000;
  return cm;
}

}  // namespace gridattn::testing
