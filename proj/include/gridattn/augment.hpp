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

// Whole-image geometric augmentation: random rotation and scaling with
// nearest-neighbour resampling.

#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "gridattn/error.hpp"
#include "gridattn/rng.hpp"
#include "gridattn/tiler.hpp"

namespace gridattn {

struct AugmentConfig {
  bool enabled = true;
  double scale_min = 0.8;
  double scale_max = 1.2;
  // Value written where the rotated image does not cover the canvas.
  double fill = 1.0;

  void validate() const {
    if (!(scale_min > 0.0) || !(scale_max >= scale_min)) {
      throw ConfigError("augment: scale range must be positive and ordered");
    }
  }
};

/// Rotates by `degrees` counter-clockwise about the centre, then scales.
/// The canvas grows to hold the whole rotated image.
inline Image rotate_scale(const Image& image, double degrees, double scale, double fill = 1.0) {
  if (image.empty()) throw DimensionError("rotate_scale: empty image");
  if (!(scale > 0.0)) throw std::invalid_argument("rotate_scale: scale must be positive");
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double w = static_cast<double>(image.width);
  const double h = static_cast<double>(image.height);
  const auto out_w = static_cast<std::size_t>(std::max(1L, std::lround((w * std::abs(cs) + h * std::abs(sn)) * scale)));
  const auto out_h = static_cast<std::size_t>(std::max(1L, std::lround((w * std::abs(sn) + h * std::abs(cs)) * scale)));
  Image out(out_h, out_w, image.channels, fill);
  const double cx_in = w / 2.0, cy_in = h / 2.0;
  const double cx_out = static_cast<double>(out_w) / 2.0, cy_out = static_cast<double>(out_h) / 2.0;
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      const double vx = (static_cast<double>(x) + 0.5 - cx_out) / scale;
      const double vy = (static_cast<double>(y) + 0.5 - cy_out) / scale;
      // Inverse rotation maps the output pixel centre back into the source.
      const double sx = std::floor(cs * vx + sn * vy + cx_in);
      const double sy = std::floor(-sn * vx + cs * vy + cy_in);
      if (sx < 0.0 || sy < 0.0 || sx >= w || sy >= h) continue;
      const auto ix = static_cast<std::size_t>(sx);
      const auto iy = static_cast<std::size_t>(sy);
      for (std::size_t c = 0; c < image.channels; ++c) out.at(y, x, c) = image.at(iy, ix, c);
    }
  }
  return out;
}

/// One random draw: angle uniform in [0, 360), scale uniform in the range.
inline SlideImage augment(const SlideImage& image, Rng& rng, const AugmentConfig& cfg = {}) {
  if (!cfg.enabled) return image;
  std::uniform_real_distribution<double> angle(0.0, 360.0);
  std::uniform_real_distribution<double> scale(cfg.scale_min, cfg.scale_max);
  const double a = angle(rng);
  const double s = cfg.scale_max > cfg.scale_min ? scale(rng) : cfg.scale_min;
  SlideImage out;
  out.pixels = rotate_scale(image.pixels, a, s, cfg.fill);
  out.label = image.label;
  out.group_id = image.group_id;
  return out;
}

}  // namespace gridattn
