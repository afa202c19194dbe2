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

/**
 * @file tiler.hpp
 * @brief Background removal and grid tiling of large single-tissue images.
 *
 * A tissue image of h x w pixels becomes an r x c grid of square cells.
 * Cells that run past the bottom or right edge are zero-padded, so
 * r = ceil(h / cell_size) and c = ceil(w / cell_size) when tiles do not
 * overlap. Cells are stored channel-first so the grid can be fed to the
 * feature extractor as a single batch.
 */

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gridattn/classes.hpp"
#include "gridattn/error.hpp"
#include "gridattn/image.hpp"
#include "gridattn/tensor.hpp"

namespace gridattn {

struct BoundingBox {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t w = 0;
  std::size_t h = 0;

  bool operator==(const BoundingBox&) const = default;
};

struct SlideImage {
  Image pixels;
  ClassId label = ClassId::kNormal;
  std::string group_id;
};

inline constexpr double kDefaultWhiteThreshold = 0.92;
inline constexpr double kDefaultTissueFraction = 0.05;

/// Tight box around pixels whose mean channel value is below `white_threshold`.
inline std::optional<BoundingBox> tissue_bounds(const Image& image,
                                                double white_threshold = kDefaultWhiteThreshold) {
  std::size_t x0 = image.width, y0 = image.height, x1 = 0, y1 = 0;
  bool found = false;
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      if (image.channel_mean(y, x) < white_threshold) {
        found = true;
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  }
  if (!found) return std::nullopt;
  return BoundingBox{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

inline Image crop(const Image& image, const BoundingBox& box) {
  if (box.x + box.w > image.width || box.y + box.h > image.height) {
    throw DimensionError("crop box outside image");
  }
  Image out(box.h, box.w, image.channels);
  for (std::size_t y = 0; y < box.h; ++y) {
    const double* src = &image.pixels[((box.y + y) * image.width + box.x) * image.channels];
    std::copy(src, src + box.w * image.channels, &out.pixels[y * box.w * image.channels]);
  }
  return out;
}

/// Crops away the white border around the tissue. Does not split tissues.
inline Image remove_background(const Image& image, double white_threshold = kDefaultWhiteThreshold) {
  if (image.empty()) throw EmptyTissueError("remove_background: empty image");
  const auto bounds = tissue_bounds(image, white_threshold);
  if (!bounds) throw EmptyTissueError("remove_background: no tissue pixels below the white threshold");
  return crop(image, *bounds);
}

// Bilinear resize, used when cells must match a fixed extractor input size.
inline Image resize(const Image& image, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0 || image.empty()) throw DimensionError("resize: empty extent");
  Image out(out_h, out_w, image.channels);
  const double sy = static_cast<double>(image.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(image.width) / static_cast<double>(out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double top = image.at(y0, x0, c) * (1 - tx) + image.at(y0, x1, c) * tx;
        const double bottom = image.at(y1, x0, c) * (1 - tx) + image.at(y1, x1, c) * tx;
        out.at(y, x, c) = top * (1 - ty) + bottom * ty;
      }
    }
  }
  return out;
}

struct CellGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t cell_size = 0;
  std::size_t stride = 0;
  std::size_t channels = 3;
  std::size_t source_height = 0;
  std::size_t source_width = 0;
  // [rows * cols, channels, cell_size, cell_size], cells in row-major grid order.
  std::vector<double> cells;
  std::vector<std::uint8_t> tissue_mask;

  std::size_t count() const { return rows * cols; }
  std::size_t cell_values() const { return channels * cell_size * cell_size; }
  double* cell(std::size_t i, std::size_t j) { return cells.data() + (i * cols + j) * cell_values(); }
  const double* cell(std::size_t i, std::size_t j) const {
    return cells.data() + (i * cols + j) * cell_values();
  }
  bool has_tissue(std::size_t i, std::size_t j) const { return tissue_mask[i * cols + j] != 0; }

  // The whole grid as a batch tensor for the extractor.
  Tensor as_batch() const {
    return Tensor::from_data({count(), channels, cell_size, cell_size}, cells);
  }
};

// Number of tiles along an axis of `extent` pixels.
inline std::size_t tiles_along(std::size_t extent, std::size_t cell_size, std::size_t stride) {
  if (extent <= cell_size) return 1;
  return (extent - cell_size + stride - 1) / stride + 1;
}

/// Splits `image` into square cells with stride cell_size - overlap. Cells
/// past the image edge are zero-padded; a cell is marked as tissue when at
/// least `min_tissue_fraction` of its area is non-background image pixels.
inline CellGrid tile(const Image& image, std::size_t cell_size, std::size_t overlap = 0,
                     double white_threshold = kDefaultWhiteThreshold,
                     double min_tissue_fraction = kDefaultTissueFraction) {
  if (cell_size < 8) throw ConfigError("tile: cell_size must be at least 8");
  if (overlap >= cell_size) throw ConfigError("tile: overlap must be smaller than cell_size");
  if (image.empty()) throw DimensionError("tile: empty image");
  CellGrid grid;
  grid.cell_size = cell_size;
  grid.stride = cell_size - overlap;
  grid.channels = image.channels;
  grid.source_height = image.height;
  grid.source_width = image.width;
  grid.rows = tiles_along(image.height, cell_size, grid.stride);
  grid.cols = tiles_along(image.width, cell_size, grid.stride);
  grid.cells.assign(grid.count() * grid.cell_values(), 0.0);
  grid.tissue_mask.assign(grid.count(), 0);
  const double area = static_cast<double>(cell_size * cell_size);
  for (std::size_t i = 0; i < grid.rows; ++i) {
    for (std::size_t j = 0; j < grid.cols; ++j) {
      double* dst = grid.cell(i, j);
      std::size_t tissue = 0;
      for (std::size_t y = 0; y < cell_size; ++y) {
        const std::size_t sy = i * grid.stride + y;
        if (sy >= image.height) break;
        for (std::size_t x = 0; x < cell_size; ++x) {
          const std::size_t sx = j * grid.stride + x;
          if (sx >= image.width) break;
          for (std::size_t c = 0; c < image.channels; ++c) {
            dst[(c * cell_size + y) * cell_size + x] = image.at(sy, sx, c);
          }
          tissue += image.channel_mean(sy, sx) < white_threshold;
        }
      }
      grid.tissue_mask[i * grid.cols + j] = static_cast<double>(tissue) / area >= min_tissue_fraction;
    }
  }
  return grid;
}

/// Reassembles a non-overlapping grid, cropped back to the source extent.
inline Image untile(const CellGrid& grid) {
  if (grid.stride != grid.cell_size) throw DimensionError("untile: grid has overlapping cells");
  Image out(grid.source_height, grid.source_width, grid.channels);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      const double* cell = grid.cell(y / grid.cell_size, x / grid.cell_size);
      const std::size_t cy = y % grid.cell_size;
      const std::size_t cx = x % grid.cell_size;
      for (std::size_t c = 0; c < grid.channels; ++c) {
        out.at(y, x, c) = cell[(c * grid.cell_size + cy) * grid.cell_size + cx];
      }
    }
  }
  return out;
}

struct ChannelStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};
};

/// (x - mean) / std per channel, padding included.
inline CellGrid normalize_cells(CellGrid grid, const ChannelStats& stats) {
  for (std::size_t c = 0; c < 3; ++c) {
    if (!(stats.std[c] > 0.0)) throw ConfigError("normalize_cells: std must be positive");
  }
  if (grid.channels != 3) throw DimensionError("normalize_cells: expected 3 channels");
  const std::size_t plane = grid.cell_size * grid.cell_size;
  for (std::size_t n = 0; n < grid.count(); ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      double* p = grid.cells.data() + (n * 3 + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - stats.mean[c]) / stats.std[c];
    }
  }
  return grid;
}

/// Per-channel mean and standard deviation over the tissue pixels of `images`.
template <typename ImageRange>
ChannelStats compute_channel_stats(const ImageRange& images, double white_threshold = kDefaultWhiteThreshold) {
  std::array<double, 3> sum{}, sq{};
  double count = 0.0;
  for (const Image& image : images) {
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) {
        if (image.channel_mean(y, x) >= white_threshold) continue;
        for (std::size_t c = 0; c < 3; ++c) {
          sum[c] += image.at(y, x, c);
          sq[c] += image.at(y, x, c) * image.at(y, x, c);
        }
        count += 1.0;
      }
    }
  }
  if (count == 0.0) throw EmptyTissueError("compute_channel_stats: no tissue pixels");
  ChannelStats stats;
  for (std::size_t c = 0; c < 3; ++c) {
    stats.mean[c] = sum[c] / count;
    const double var = std::max(sq[c] / count - stats.mean[c] * stats.mean[c], 0.0);
    stats.std[c] = std::max(std::sqrt(var), 1e-6);
  }
  return stats;
}

}  // namespace gridattn
