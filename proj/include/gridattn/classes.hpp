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

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "gridattn/error.hpp"

namespace gridattn {

// Tissue classes. Numeric order is clinical risk order (higher is worse).
enum class ClassId : std::size_t {
  kNormal = 0,
  kBeNoDysplasia = 1,
  kBeWithDysplasia = 2,
  kAdenocarcinoma = 3,
};

inline constexpr std::size_t kNumClasses = 4;

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "normal", "be_no_dysplasia", "be_with_dysplasia", "adenocarcinoma"};

inline constexpr std::array<std::string_view, kNumClasses> kClassTitles = {
    "Normal", "BE-no-dysplasia", "BE-with-dysplasia", "Adenocarcinoma"};

inline constexpr std::size_t index_of(ClassId c) { return static_cast<std::size_t>(c); }
inline constexpr ClassId class_at(std::size_t i) { return static_cast<ClassId>(i); }

inline std::string_view class_name(ClassId c) { return kClassNames.at(index_of(c)); }

inline ClassId parse_class(std::string_view name) {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (kClassNames[i] == name) return class_at(i);
  }
  throw DataError("unknown class '" + std::string(name) + "'");
}

}  // namespace gridattn
