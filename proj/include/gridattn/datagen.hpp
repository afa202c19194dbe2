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

// Synthetic slide corpus. Each image is a pink tissue field with smooth
// stain variation and sparse nuclei on a white margin. Abnormal images
// carry one to three elliptical lesions whose texture depends on class:
// broad stripes, fine stripes with crowded nuclei, or coarse dark blobs.

#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "gridattn/classes.hpp"
#include "gridattn/dataset.hpp"
#include "gridattn/image.hpp"
#include "gridattn/rng.hpp"
#include "gridattn/settings.hpp"

namespace gridattn {

struct LesionTexture {
  double stripe_period = 0.0;  // pixels; 0 disables stripes
  double stripe_amplitude = 0.0;
  double dot_density = 0.0;  // disks per pixel
  double dot_radius = 1.5;
  std::array<double, 3> tint{0.0, 0.0, 0.0};
};

struct CorpusSpec {
  std::uint64_t seed = 1;
  std::array<std::size_t, kNumClasses> counts{213, 108, 51, 78};
  std::size_t image_min = 128;
  std::size_t image_max = 256;
  std::size_t cell_size = 32;
  std::size_t lesions_min = 1;
  std::size_t lesions_max = 3;
  std::size_t lesion_min = 40;
  std::size_t lesion_max = 88;
  std::size_t group_min = 1;
  std::size_t group_max = 3;
  std::size_t margin_max = 12;
  double noise = 0.03;
  double lesion_strength = 1.0;
  // Index 0 describes the nuclei scattered over all tissue.
  std::array<LesionTexture, kNumClasses> textures{{
      {0.0, 0.0, 0.0015, 1.2, {0.0, 0.0, 0.0}},
      {12.0, 0.16, 0.0, 1.5, {-0.06, 0.0, 0.05}},
      {6.0, 0.16, 0.006, 1.5, {-0.06, -0.03, 0.03}},
      {0.0, 0.0, 0.010, 3.0, {-0.10, -0.10, -0.02}},
  }};
  SplitFractions fractions;

  std::size_t total() const {
    std::size_t n = 0;
    for (std::size_t c : counts) n += c;
    return n;
  }

  void validate() const {
    if (total() == 0) throw ConfigError("corpus: counts are all zero");
    if (image_min < 8 || image_max < image_min) throw ConfigError("corpus: image size range is invalid");
    if (cell_size < 8) throw ConfigError("corpus: cell_size must be at least 8");
    if (lesions_min == 0) throw ConfigError("corpus: lesions_min must be at least 1 for abnormal classes");
    if (lesions_max < lesions_min) throw ConfigError("corpus: lesions_max below lesions_min");
    if (lesion_min == 0 || lesion_max < lesion_min) throw ConfigError("corpus: lesion size range is invalid");
    if (image_min < 2 * margin_max + 8) throw ConfigError("corpus: margin_max leaves no tissue");
    if (lesion_min > image_min - 2 * margin_max) {
      throw ConfigError("corpus: lesion_min " + std::to_string(lesion_min) + " does not fit inside a " +
                        std::to_string(image_min) + " px image with margin " + std::to_string(margin_max));
    }
    if (group_min == 0 || group_max < group_min) throw ConfigError("corpus: group size range is invalid");
    if (!(noise >= 0.0) || !(lesion_strength >= 0.0)) throw ConfigError("corpus: noise and strength must be >= 0");
    for (const auto& t : textures) {
      if (t.stripe_period < 0.0 || t.dot_density < 0.0 || t.dot_radius <= 0.0) {
        throw ConfigError("corpus: texture parameters must be non-negative");
      }
    }
    fractions.validate();
  }

  static CorpusSpec from_settings(Settings& s) {
    CorpusSpec spec;
    spec.seed = s.get("seed", spec.seed);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const std::string name(kClassNames[c]);
      spec.counts[c] = s.get_size("count." + name, spec.counts[c]);
      auto& t = spec.textures[c];
      const std::string p = "texture." + name + ".";
      t.stripe_period = s.get(p + "stripe_period", t.stripe_period);
      t.stripe_amplitude = s.get(p + "stripe_amplitude", t.stripe_amplitude);
      t.dot_density = s.get(p + "dot_density", t.dot_density);
      t.dot_radius = s.get(p + "dot_radius", t.dot_radius);
      auto tint = s.get_list(p + "tint", {t.tint.begin(), t.tint.end()});
      if (tint.size() != 3) throw ConfigError("corpus: key '" + p + "tint' needs three values");
      std::copy(tint.begin(), tint.end(), t.tint.begin());
    }
    spec.image_min = s.get_size("image_min", spec.image_min);
    spec.image_max = s.get_size("image_max", spec.image_max);
    spec.cell_size = s.get_size("cell_size", spec.cell_size);
    spec.lesions_min = s.get_size("lesions_min", spec.lesions_min);
    spec.lesions_max = s.get_size("lesions_max", spec.lesions_max);
    spec.lesion_min = s.get_size("lesion_min", spec.lesion_min);
    spec.lesion_max = s.get_size("lesion_max", spec.lesion_max);
    spec.group_min = s.get_size("group_min", spec.group_min);
    spec.group_max = s.get_size("group_max", spec.group_max);
    spec.margin_max = s.get_size("margin_max", spec.margin_max);
    spec.noise = s.get("noise", spec.noise);
    spec.lesion_strength = s.get("lesion_strength", spec.lesion_strength);
    spec.fractions.value[0] = s.get("fraction.train", spec.fractions.value[0]);
    spec.fractions.value[1] = s.get("fraction.val", spec.fractions.value[1]);
    spec.fractions.value[2] = s.get("fraction.test", spec.fractions.value[2]);
    s.reject_unknown();
    spec.validate();
    return spec;
  }

  std::string to_text() const {
    SettingsWriter w;
    w.put("seed", seed);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      w.put("count." + std::string(kClassNames[c]), static_cast<std::uint64_t>(counts[c]));
    }
    w.put("image_min", static_cast<std::uint64_t>(image_min));
    w.put("image_max", static_cast<std::uint64_t>(image_max));
    w.put("cell_size", static_cast<std::uint64_t>(cell_size));
    w.put("lesions_min", static_cast<std::uint64_t>(lesions_min));
    w.put("lesions_max", static_cast<std::uint64_t>(lesions_max));
    w.put("lesion_min", static_cast<std::uint64_t>(lesion_min));
    w.put("lesion_max", static_cast<std::uint64_t>(lesion_max));
    w.put("group_min", static_cast<std::uint64_t>(group_min));
    w.put("group_max", static_cast<std::uint64_t>(group_max));
    w.put("margin_max", static_cast<std::uint64_t>(margin_max));
    w.put("noise", noise);
    w.put("lesion_strength", lesion_strength);
    w.put("fraction.train", fractions.value[0]);
    w.put("fraction.val", fractions.value[1]);
    w.put("fraction.test", fractions.value[2]);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const auto& t = textures[c];
      const std::string p = "texture." + std::string(kClassNames[c]) + ".";
      w.put(p + "stripe_period", t.stripe_period);
      w.put(p + "stripe_amplitude", t.stripe_amplitude);
      w.put(p + "dot_density", t.dot_density);
      w.put(p + "dot_radius", t.dot_radius);
      w.put(p + "tint", std::vector<double>(t.tint.begin(), t.tint.end()));
    }
    return w.text();
  }
};

// Stain colour and smooth variation shared by the images of one group.
struct GroupStyle {
  std::array<double, 3> base{0.87, 0.62, 0.75};
  std::array<double, 4> wave_fx{}, wave_fy{}, wave_phase{};
};

inline GroupStyle draw_group_style(Rng& rng) {
  std::uniform_real_distribution<double> jitter(-0.03, 0.03);
  std::uniform_real_distribution<double> freq(-1.0 / 40.0, 1.0 / 40.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  GroupStyle g;
  for (double& b : g.base) b += jitter(rng);
  for (std::size_t i = 0; i < 4; ++i) {
    g.wave_fx[i] = freq(rng);
    g.wave_fy[i] = freq(rng);
    g.wave_phase[i] = phase(rng);
  }
  return g;
}

struct GeneratedImage {
  Image image;
  std::vector<RoiBox> boxes;
  ClassId label = ClassId::kNormal;
};

namespace detail {

inline std::size_t uniform_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline void paint_dots(Image& img, const BoundingBox& area, const std::vector<std::uint8_t>* mask,
                       double density, double radius, double alpha, Rng& rng) {
  static constexpr std::array<double, 3> kNucleus{0.35, 0.15, 0.45};
  const double expected = density * static_cast<double>(area.w * area.h);
  const std::size_t n = std::poisson_distribution<std::size_t>(expected)(rng);
  std::uniform_real_distribution<double> ux(0.0, static_cast<double>(area.w));
  std::uniform_real_distribution<double> uy(0.0, static_cast<double>(area.h));
  std::uniform_real_distribution<double> ur(0.7 * radius, 1.3 * radius);
  for (std::size_t k = 0; k < n; ++k) {
    const double cx = ux(rng), cy = uy(rng), r = ur(rng);
    const auto x0 = static_cast<long>(std::floor(cx - r)), x1 = static_cast<long>(std::ceil(cx + r));
    const auto y0 = static_cast<long>(std::floor(cy - r)), y1 = static_cast<long>(std::ceil(cy + r));
    for (long y = std::max(0L, y0); y <= std::min<long>(static_cast<long>(area.h) - 1, y1); ++y) {
      for (long x = std::max(0L, x0); x <= std::min<long>(static_cast<long>(area.w) - 1, x1); ++x) {
        const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
        if (dx * dx + dy * dy > r * r) continue;
        if (mask && !(*mask)[static_cast<std::size_t>(y) * area.w + static_cast<std::size_t>(x)]) continue;
        const std::size_t py = area.y + static_cast<std::size_t>(y), px = area.x + static_cast<std::size_t>(x);
        for (std::size_t c = 0; c < 3; ++c) {
          img.at(py, px, c) = (1.0 - alpha) * img.at(py, px, c) + alpha * kNucleus[c];
        }
      }
    }
  }
}

inline void paint_lesion(Image& img, const BoundingBox& box, const LesionTexture& t, double strength, Rng& rng) {
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::uniform_real_distribution<double> jitter(0.85, 1.15);
  const double phi = angle(rng);
  const double period = t.stripe_period * jitter(rng);
  const double amplitude = t.stripe_amplitude * jitter(rng) * strength;
  const double cx = static_cast<double>(box.w) / 2.0, cy = static_cast<double>(box.h) / 2.0;
  std::vector<std::uint8_t> mask(box.w * box.h, 0);
  for (std::size_t y = 0; y < box.h; ++y) {
    for (std::size_t x = 0; x < box.w; ++x) {
      const double nx = (static_cast<double>(x) + 0.5 - cx) / cx;
      const double ny = (static_cast<double>(y) + 0.5 - cy) / cy;
      if (nx * nx + ny * ny > 1.0) continue;
      mask[y * box.w + x] = 1;
      double wave = 0.0;
      if (period > 0.0) {
        const double u = static_cast<double>(x) * std::cos(phi) + static_cast<double>(y) * std::sin(phi);
        wave = amplitude * std::sin(2.0 * std::numbers::pi * u / period);
      }
      for (std::size_t c = 0; c < 3; ++c) {
        double& v = img.at(box.y + y, box.x + x, c);
        v += strength * t.tint[c] + wave;
      }
    }
  }
  if (t.dot_density > 0.0) paint_dots(img, box, &mask, t.dot_density, t.dot_radius, 0.8 * std::min(strength, 1.0), rng);
}

inline bool overlaps(const BoundingBox& a, const BoundingBox& b) {
  return a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h;
}

}  // namespace detail

/// Renders one image of class `label`. Lesions of lower or equal risk may
/// join the defining lesion; the highest-risk one is painted last.
inline GeneratedImage generate_image(const CorpusSpec& spec, ClassId label, const GroupStyle& style, Rng& rng) {
  GeneratedImage out;
  const std::size_t h = detail::uniform_size(rng, spec.image_min, spec.image_max);
  const std::size_t w = detail::uniform_size(rng, spec.image_min, spec.image_max);
  Image img(h, w, 3);
  std::uniform_real_distribution<double> white(0.96, 0.99);
  for (double& v : img.pixels) v = white(rng);

  std::array<std::size_t, 4> margin{};
  for (auto& m : margin) m = detail::uniform_size(rng, 0, spec.margin_max);
  const BoundingBox tissue{margin[0], margin[1], w - margin[0] - margin[2], h - margin[1] - margin[3]};

  std::normal_distribution<double> grain(0.0, spec.noise);
  for (std::size_t y = tissue.y; y < tissue.y + tissue.h; ++y) {
    for (std::size_t x = tissue.x; x < tissue.x + tissue.w; ++x) {
      double wave = 0.0;
      for (std::size_t i = 0; i < 4; ++i) {
        wave += 0.03 * std::sin(2.0 * std::numbers::pi * (style.wave_fx[i] * static_cast<double>(x) +
                                                          style.wave_fy[i] * static_cast<double>(y)) +
                                style.wave_phase[i]);
      }
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = style.base[c] + wave + grain(rng);
    }
  }
  const LesionTexture& nuclei = spec.textures[0];
  detail::paint_dots(img, tissue, nullptr, nuclei.dot_density, nuclei.dot_radius, 0.7, rng);

  if (label != ClassId::kNormal) {
    const std::size_t n = detail::uniform_size(rng, spec.lesions_min, spec.lesions_max);
    std::vector<ClassId> classes{label};
    for (std::size_t i = 1; i < n; ++i) classes.push_back(class_at(detail::uniform_size(rng, 1, index_of(label))));
    std::sort(classes.begin(), classes.end());
    for (ClassId cls : classes) {
      BoundingBox box;
      for (int attempt = 0; attempt < 20; ++attempt) {
        const std::size_t bw = detail::uniform_size(rng, spec.lesion_min, std::min(spec.lesion_max, tissue.w));
        const std::size_t bh = detail::uniform_size(rng, spec.lesion_min, std::min(spec.lesion_max, tissue.h));
        box = {tissue.x + detail::uniform_size(rng, 0, tissue.w - bw),
               tissue.y + detail::uniform_size(rng, 0, tissue.h - bh), bw, bh};
        bool clear = true;
        for (const auto& other : out.boxes) clear &= !detail::overlaps(box, other.box);
        if (clear) break;
      }
      detail::paint_lesion(img, box, spec.textures[index_of(cls)], spec.lesion_strength, rng);
      out.boxes.push_back({box, cls});
    }
  }
  for (double& v : img.pixels) v = std::clamp(v, 0.0, 1.0);
  std::vector<ClassId> classes;
  for (const auto& b : out.boxes) classes.push_back(b.cls);
  out.label = derive_label(classes);
  out.image = std::move(img);
  return out;
}

inline std::string zero_pad(std::size_t v, std::size_t width) {
  std::string s = std::to_string(v);
  return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

/// Generates the whole corpus. With an output directory, writes
/// images/<id>.png, index.csv and spec.txt there.
inline std::vector<IndexRecord> generate(const CorpusSpec& spec, const std::filesystem::path& out_dir = {}) {
  spec.validate();
  std::vector<IndexRecord> records;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir / "images");
  std::size_t image_index = 0, group_index = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::size_t remaining = spec.counts[c];
    while (remaining > 0) {
      Rng group_rng = make_rng(spec.seed, Stream::kData, (std::uint64_t{1} << 32) | group_index);
      const std::size_t size = std::min(remaining, detail::uniform_size(group_rng, spec.group_min, spec.group_max));
      const GroupStyle style = draw_group_style(group_rng);
      const std::string group_id = "g" + zero_pad(++group_index, 4);
      for (std::size_t k = 0; k < size; ++k) {
        Rng rng = make_rng(spec.seed, Stream::kData, image_index);
        GeneratedImage g = generate_image(spec, class_at(c), style, rng);
        IndexRecord r;
        r.id = "img" + zero_pad(++image_index, 5);
        r.path = "images/" + r.id + ".png";
        r.label = g.label;
        r.group_id = group_id;
        r.boxes = g.boxes;
        if (!out_dir.empty()) write_png(out_dir / r.path, g.image);
        records.push_back(std::move(r));
      }
      remaining -= size;
    }
  }
  assign_splits(records, spec.fractions, spec.seed);
  check_group_disjoint(records);
  if (!out_dir.empty()) {
    write_index(out_dir / "index.csv", records);
    std::ofstream os(out_dir / "spec.txt", std::ios::binary | std::ios::trunc);
    os << spec.to_text();
    if (!os) throw IoError("cannot write " + (out_dir / "spec.txt").string());
  }
  return records;
}

/// Image counts per split and label.
inline std::array<std::array<std::size_t, kNumClasses>, 3> split_summary(const std::vector<IndexRecord>& records) {
  std::array<std::array<std::size_t, kNumClasses>, 3> out{};
  for (const auto& r : records) ++out[static_cast<std::size_t>(r.split)][index_of(r.label)];
  return out;
}

}  // namespace gridattn
