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

// Complete settings for a training or evaluation run, read from and written
// back to the sectioned key = value format.

#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "gridattn/attention.hpp"
#include "gridattn/baseline.hpp"
#include "gridattn/extractor.hpp"
#include "gridattn/settings.hpp"
#include "gridattn/trainer.hpp"

namespace gridattn {

struct RunConfig {
  DataConfig data;
  ExtractorConfig extractor = ExtractorConfig::desk();
  AttentionConfig attention;
  TrainConfig train;
  BaselineConfig baseline;
  std::size_t threads = 0;  // 0: GRIDATTN_THREADS or all cores

  void validate() const {
    data.validate();
    extractor.validate();
    attention.validate();
    train.validate();
    baseline.validate();
  }

  static RunConfig from_settings(Settings& s) {
    RunConfig c;
    c.data.cell_size = s.get_size("data.cell_size", c.data.cell_size);
    c.data.overlap = s.get_size("data.overlap", c.data.overlap);
    c.data.white_threshold = s.get("data.white_threshold", c.data.white_threshold);
    c.data.tissue_fraction = s.get("data.tissue_fraction", c.data.tissue_fraction);

    std::vector<double> channels, kernels, strides;
    for (const auto& st : c.extractor.stages) {
      channels.push_back(static_cast<double>(st.out_channels));
      kernels.push_back(static_cast<double>(st.kernel));
      strides.push_back(static_cast<double>(st.stride));
    }
    channels = s.get_list("extractor.channels", channels);
    kernels = s.get_list("extractor.kernels", kernels);
    strides = s.get_list("extractor.strides", strides);
    if (kernels.size() != channels.size() || strides.size() != channels.size()) {
      throw ConfigError("extractor: channels, kernels and strides need the same number of entries");
    }
    auto as_size = [](double v, const char* key) {
      if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError(std::string("extractor: ") + key + " must be positive integers");
      return static_cast<std::size_t>(v);
    };
    c.extractor.stages.clear();
    for (std::size_t i = 0; i < channels.size(); ++i) {
      c.extractor.stages.push_back(
          {as_size(channels[i], "channels"), as_size(kernels[i], "kernels"), as_size(strides[i], "strides")});
    }
    c.extractor.freeze_depth = s.get_size("extractor.freeze_depth", c.extractor.freeze_depth);

    c.attention.heads = s.get_size("attention.heads", c.attention.heads);
    c.attention.kernel = s.get_size("attention.kernel", c.attention.kernel);
    c.attention.hidden = s.get_size("attention.hidden", c.attention.hidden);
    c.attention.dropout = s.get("attention.dropout", c.attention.dropout);

    c.train.seed = s.get("train.seed", c.train.seed);
    c.train.epochs = s.get_size("train.epochs", c.train.epochs);
    c.train.batch_size = s.get_size("train.batch_size", c.train.batch_size);
    c.train.schedule.lr0 = s.get("train.lr0", c.train.schedule.lr0);
    c.train.schedule.decay = s.get("train.decay", c.train.schedule.decay);
    c.train.schedule.restart_lr = s.get("train.restart_lr", c.train.schedule.restart_lr);
    c.train.schedule.restart_period = s.get_size("train.restart_period", c.train.schedule.restart_period);
    c.train.augment.enabled = s.get_bool("train.augment", c.train.augment.enabled);
    c.train.augment.scale_min = s.get("train.scale_min", c.train.augment.scale_min);
    c.train.augment.scale_max = s.get("train.scale_max", c.train.augment.scale_max);
    c.train.augment.fill = s.get("train.fill", c.train.augment.fill);

    c.baseline.crop_stride = s.get_size("baseline.crop_stride", c.baseline.crop_stride);
    c.baseline.normal_stride = s.get_size("baseline.normal_stride", c.baseline.normal_stride);
    c.baseline.epochs = s.get_size("baseline.epochs", c.baseline.epochs);
    c.baseline.batch_size = s.get_size("baseline.batch_size", c.baseline.batch_size);
    c.baseline.augment = s.get_bool("baseline.augment", c.baseline.augment);
    std::vector<double> counts;
    for (std::size_t t : c.baseline.grid.counts) counts.push_back(static_cast<double>(t));
    counts = s.get_list("baseline.count_candidates", counts);
    c.baseline.grid.counts.clear();
    for (double v : counts) {
      if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("baseline: count_candidates must be integers >= 1");
      c.baseline.grid.counts.push_back(static_cast<std::size_t>(v));
    }
    c.baseline.grid.confidences = s.get_list("baseline.confidence_candidates", c.baseline.grid.confidences);

    c.threads = s.get_size("eval.threads", c.threads);
    s.reject_unknown();
    c.validate();
    return c;
  }

  static RunConfig parse(std::string_view text, const std::string& origin = "<config>") {
    Settings s = Settings::parse(text, origin);
    return from_settings(s);
  }

  static RunConfig load(const std::filesystem::path& path) {
    Settings s = Settings::load(path);
    return from_settings(s);
  }

  std::string to_text() const {
    SettingsWriter w;
    w.section("data");
    w.put("cell_size", static_cast<std::uint64_t>(data.cell_size));
    w.put("overlap", static_cast<std::uint64_t>(data.overlap));
    w.put("white_threshold", data.white_threshold);
    w.put("tissue_fraction", data.tissue_fraction);

    w.section("extractor");
    std::vector<double> channels, kernels, strides;
    for (const auto& st : extractor.stages) {
      channels.push_back(static_cast<double>(st.out_channels));
      kernels.push_back(static_cast<double>(st.kernel));
      strides.push_back(static_cast<double>(st.stride));
    }
    w.put("channels", channels);
    w.put("kernels", kernels);
    w.put("strides", strides);
    w.put("freeze_depth", static_cast<std::uint64_t>(extractor.freeze_depth));

    w.section("attention");
    w.put("heads", static_cast<std::uint64_t>(attention.heads));
    w.put("kernel", static_cast<std::uint64_t>(attention.kernel));
    w.put("hidden", static_cast<std::uint64_t>(attention.hidden));
    w.put("dropout", attention.dropout);

    w.section("train");
    w.put("seed", train.seed);
    w.put("epochs", static_cast<std::uint64_t>(train.epochs));
    w.put("batch_size", static_cast<std::uint64_t>(train.batch_size));
    w.put("lr0", train.schedule.lr0);
    w.put("decay", train.schedule.decay);
    w.put("restart_lr", train.schedule.restart_lr);
    w.put("restart_period", static_cast<std::uint64_t>(train.schedule.restart_period));
    w.put("augment", train.augment.enabled);
    w.put("scale_min", train.augment.scale_min);
    w.put("scale_max", train.augment.scale_max);
    w.put("fill", train.augment.fill);

    w.section("baseline");
    w.put("crop_stride", static_cast<std::uint64_t>(baseline.crop_stride));
    w.put("normal_stride", static_cast<std::uint64_t>(baseline.normal_stride));
    w.put("epochs", static_cast<std::uint64_t>(baseline.epochs));
    w.put("batch_size", static_cast<std::uint64_t>(baseline.batch_size));
    w.put("augment", baseline.augment);
    std::vector<double> counts;
    for (std::size_t t : baseline.grid.counts) counts.push_back(static_cast<double>(t));
    w.put("count_candidates", counts);
    w.put("confidence_candidates", baseline.grid.confidences);

    w.section("eval");
    w.put("threads", static_cast<std::uint64_t>(threads));
    return w.text();
  }
};

}  // namespace gridattn
