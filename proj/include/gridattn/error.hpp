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

#include <stdexcept>
#include <string>

namespace gridattn {

// Exit codes surfaced by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kData = 3,
  kIncompatible = 4,
};

// Shape disagreement between operands of a tensor op.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid or unknown configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problems with input data: unreadable images, malformed index, leakage.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyTissueError : public DataError {
 public:
  using DataError::DataError;
};

class LeakageError : public DataError {
 public:
  using DataError::DataError;
};

// A checkpoint that does not fit the model/corpus it is applied to.
class IncompatibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline ExitCode exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return ExitCode::kConfig;
  if (dynamic_cast<const DataError*>(&e) != nullptr) return ExitCode::kData;
  if (dynamic_cast<const IncompatibleError*>(&e) != nullptr) return ExitCode::kIncompatible;
  return ExitCode::kFailure;
}

}  // namespace gridattn
