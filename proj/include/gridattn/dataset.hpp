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

// Corpus index: per-image records, highest-risk labelling, group-level
// splitting, leakage checks and loading.

#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gridattn/classes.hpp"
#include "gridattn/error.hpp"
#include "gridattn/image.hpp"
#include "gridattn/rng.hpp"
#include "gridattn/settings.hpp"
#include "gridattn/tiler.hpp"

namespace gridattn {

enum class Split : std::size_t { kTrain = 0, kVal = 1, kTest = 2 };
inline constexpr std::array<std::string_view, 3> kSplitNames = {"train", "val", "test"};

inline std::string_view split_name(Split s) { return kSplitNames.at(static_cast<std::size_t>(s)); }

inline Split parse_split(std::string_view name) {
  for (std::size_t i = 0; i < kSplitNames.size(); ++i) {
    if (kSplitNames[i] == name) return static_cast<Split>(i);
  }
  throw DataError("unknown split '" + std::string(name) + "'");
}

struct RoiBox {
  BoundingBox box;
  ClassId cls = ClassId::kNormal;

  bool operator==(const RoiBox&) const = default;
};

struct IndexRecord {
  std::string id;
  std::string path;  // relative to the corpus directory
  ClassId label = ClassId::kNormal;
  std::string group_id;
  Split split = Split::kTrain;
  std::vector<RoiBox> boxes;

  bool operator==(const IndexRecord&) const = default;
};

/// Highest-risk class among the lesions; normal when there are none.
template <typename Range>
ClassId derive_label(const Range& classes) {
  ClassId out = ClassId::kNormal;
  for (ClassId c : classes) out = std::max(out, c);
  return out;
}

inline ClassId derive_label(std::initializer_list<ClassId> classes) {
  return derive_label<std::initializer_list<ClassId>>(classes);
}

struct SplitFractions {
  std::array<double, 3> value{8.0 / 15.0, 2.0 / 15.0, 5.0 / 15.0};

  void validate() const {
    double total = 0.0;
    for (double f : value) {
      if (f < 0.0) throw ConfigError("split fractions must be non-negative");
      total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  }
};

/// Assigns whole groups to splits. Groups are visited in a seeded random
/// order and each goes to the split with the largest combined shortfall,
/// measured against both the global target and its label's target.
inline void assign_splits(std::vector<IndexRecord>& records, const SplitFractions& fractions,
                          std::uint64_t seed) {
  fractions.validate();
  struct Group {
    std::string id;
    std::vector<std::size_t> members;
    ClassId label = ClassId::kNormal;
  };
  std::map<std::string, Group> by_id;
  for (std::size_t i = 0; i < records.size(); ++i) {
    Group& g = by_id[records[i].group_id];
    g.id = records[i].group_id;
    g.members.push_back(i);
    g.label = std::max(g.label, records[i].label);
  }
  std::size_t active = 0;
  for (double f : fractions.value) active += f > 0.0;
  if (by_id.size() < active) {
    throw DataError("cannot split " + std::to_string(by_id.size()) + " group(s) into " + std::to_string(active) +
                    " non-empty splits");
  }
  std::vector<Group> groups;
  for (auto& [id, g] : by_id) groups.push_back(std::move(g));
  Rng rng = make_rng(seed, Stream::kSplit);
  std::shuffle(groups.begin(), groups.end(), rng);
  // Larger groups first keeps the final imbalance within one group.
  std::stable_sort(groups.begin(), groups.end(),
                   [](const Group& a, const Group& b) { return a.members.size() > b.members.size(); });

  std::array<double, kNumClasses> stratum_total{};
  for (const auto& g : groups) stratum_total[index_of(g.label)] += static_cast<double>(g.members.size());
  const double total = static_cast<double>(records.size());
  std::array<double, 3> count{};
  std::array<std::array<double, 3>, kNumClasses> stratum_count{};
  for (const auto& g : groups) {
    const std::size_t s_idx = index_of(g.label);
    std::size_t best = 0;
    double best_score = -1e300;
    for (std::size_t s = 0; s < 3; ++s) {
      if (fractions.value[s] <= 0.0) continue;
      const double global = fractions.value[s] * total - count[s];
      const double stratum = fractions.value[s] * stratum_total[s_idx] - stratum_count[s_idx][s];
      // An empty split that must be non-empty always wins.
      const double score = (count[s] == 0.0 ? 1e9 : 0.0) + global + stratum;
      if (score > best_score) {
        best_score = score;
        best = s;
      }
    }
    const double n = static_cast<double>(g.members.size());
    count[best] += n;
    stratum_count[s_idx][best] += n;
    for (std::size_t i : g.members) records[i].split = static_cast<Split>(best);
  }
}

/// Throws LeakageError if any group appears in more than one split.
inline void check_group_disjoint(const std::vector<IndexRecord>& records) {
  std::map<std::string, Split> seen;
  for (const auto& r : records) {
    auto [it, inserted] = seen.emplace(r.group_id, r.split);
    if (!inserted && it->second != r.split) {
      throw LeakageError("group '" + r.group_id + "' appears in both " + std::string(split_name(it->second)) +
                         " and " + std::string(split_name(r.split)) + " (image " + r.id + ")");
    }
  }
}

inline std::string format_boxes(const std::vector<RoiBox>& boxes) {
  std::string out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    out += (i ? ";" : "") + std::to_string(b.box.x) + ":" + std::to_string(b.box.y) + ":" +
           std::to_string(b.box.w) + ":" + std::to_string(b.box.h) + ":" + std::string(class_name(b.cls));
  }
  return out;
}

inline std::vector<RoiBox> parse_boxes(const std::string& text) {
  std::vector<RoiBox> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    std::array<std::string, 5> parts;
    std::stringstream is(item);
    for (auto& p : parts) {
      if (!std::getline(is, p, ':')) throw DataError("malformed box '" + item + "'");
    }
    try {
      RoiBox b;
      b.box = {std::stoul(parts[0]), std::stoul(parts[1]), std::stoul(parts[2]), std::stoul(parts[3])};
      b.cls = parse_class(parts[4]);
      out.push_back(b);
    } catch (const std::logic_error&) {
      throw DataError("malformed box '" + item + "'");
    }
  }
  return out;
}

inline constexpr std::string_view kIndexHeader = "id,path,label,group_id,split,boxes";

inline void write_index(const std::filesystem::path& path, const std::vector<IndexRecord>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write index " + path.string());
  os << kIndexHeader << "\n";
  for (const auto& r : records) {
    os << r.id << "," << r.path << "," << class_name(r.label) << "," << r.group_id << "," << split_name(r.split)
       << "," << format_boxes(r.boxes) << "\n";
  }
  if (!os) throw IoError("failed writing index " + path.string());
}

inline std::vector<IndexRecord> read_index(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot read corpus index " + path.string());
  std::string line;
  if (!std::getline(is, line) || trim(line) != kIndexHeader) {
    throw DataError(path.string() + ": unexpected header, want '" + std::string(kIndexHeader) + "'");
  }
  std::vector<IndexRecord> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (line.back() == ',') fields.emplace_back();
    if (fields.size() != 6) throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 6 fields");
    IndexRecord r;
    r.id = fields[0];
    r.path = fields[1];
    r.label = parse_class(fields[2]);
    r.group_id = fields[3];
    r.split = parse_split(fields[4]);
    r.boxes = parse_boxes(fields[5]);
    out.push_back(std::move(r));
  }
  return out;
}

/// An image ready for the models: background cropped, boxes shifted into
/// the cropped frame.
struct LoadedImage {
  IndexRecord record;
  SlideImage slide;
  std::vector<RoiBox> boxes;
};

inline std::vector<RoiBox> shift_boxes(const std::vector<RoiBox>& boxes, const BoundingBox& frame) {
  std::vector<RoiBox> out;
  for (const auto& b : boxes) {
    const std::size_t x0 = std::max(b.box.x, frame.x), y0 = std::max(b.box.y, frame.y);
    const std::size_t x1 = std::min(b.box.x + b.box.w, frame.x + frame.w);
    const std::size_t y1 = std::min(b.box.y + b.box.h, frame.y + frame.h);
    if (x1 <= x0 || y1 <= y0) continue;
    out.push_back({{x0 - frame.x, y0 - frame.y, x1 - x0, y1 - y0}, b.cls});
  }
  return out;
}

inline LoadedImage load_image(const std::filesystem::path& corpus_dir, const IndexRecord& record,
                              double white_threshold = kDefaultWhiteThreshold) {
  Image raw = read_image(corpus_dir / record.path);
  auto frame = tissue_bounds(raw, white_threshold);
  if (!frame) throw EmptyTissueError("image " + record.id + " has no tissue");
  LoadedImage out;
  out.record = record;
  out.slide.pixels = crop(raw, *frame);
  out.slide.label = record.label;
  out.slide.group_id = record.group_id;
  out.boxes = shift_boxes(record.boxes, *frame);
  return out;
}

inline std::vector<LoadedImage> load_split(const std::filesystem::path& corpus_dir,
                                           const std::vector<IndexRecord>& records, Split split,
                                           double white_threshold = kDefaultWhiteThreshold) {
  std::vector<LoadedImage> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(load_image(corpus_dir, r, white_threshold));
  }
  return out;
}

}  // namespace gridattn
