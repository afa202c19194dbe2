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

// Binary checkpoint files.
//
// Layout, all integers little-endian:
//   "GATT"  u32 version  u64 epoch  u64 config_hash
//   u32 count, then `count` records of weights and normalization stats
//   u64 optimizer step, u32 count, then moment records
//   u64 length, then the UTF-8 config snapshot
// A record is u32 name length, name bytes, u32 ndim, u64 dims[ndim],
// f64 values[prod(dims)].

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gridattn/error.hpp"
#include "gridattn/extractor.hpp"
#include "gridattn/optim.hpp"
#include "gridattn/rng.hpp"
#include "gridattn/tiler.hpp"

namespace gridattn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ArrayRecord {
  std::string name;
  Shape shape;
  std::vector<double> data;

  bool operator==(const ArrayRecord&) const = default;
};

struct Checkpoint {
  std::uint64_t epoch = 0;  // epochs completed
  std::uint64_t optimizer_step = 0;
  std::vector<ArrayRecord> weights;
  std::vector<ArrayRecord> optimizer;
  ChannelStats stats;
  std::string config;

  std::uint64_t config_hash() const { return fnv1a(config); }

  const ArrayRecord* find(std::string_view name) const {
    for (const auto& r : weights) {
      if (r.name == name) return &r;
    }
    return nullptr;
  }
};

namespace detail {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::string_view s) { os_.write(s.data(), static_cast<std::streamsize>(s.size())); }

  void record(const ArrayRecord& r) {
    u32(static_cast<std::uint32_t>(r.name.size()));
    bytes(r.name);
    u32(static_cast<std::uint32_t>(r.shape.size()));
    for (std::size_t d : r.shape) u64(d);
    for (double v : r.data) f64(v);
  }

 private:
  void put(std::uint64_t v, int n) {
    char buf[8];
    for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os_.write(buf, n);
  }
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::uint64_t size) : is_(is), remaining_(size) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }

  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    remaining_ -= n;
    return s;
  }

  ArrayRecord record() {
    ArrayRecord r;
    r.name = bytes(u32());
    const std::uint32_t ndim = u32();
    if (ndim > 8) throw IncompatibleError("checkpoint: record '" + r.name + "' has implausible rank");
    std::uint64_t numel = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
      r.shape.push_back(u64());
      numel *= r.shape.back();
    }
    need(numel * 8);
    r.data.resize(numel);
    for (double& v : r.data) v = f64();
    return r;
  }

  std::uint64_t remaining() const { return remaining_; }

 private:
  void need(std::uint64_t n) {
    if (n > remaining_) throw IncompatibleError("checkpoint: truncated file");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::uint64_t>(n));
    unsigned char buf[8];
    is_.read(reinterpret_cast<char*>(buf), n);
    remaining_ -= static_cast<std::uint64_t>(n);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
  }
  std::istream& is_;
  std::uint64_t remaining_;
};

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + tmp.string());
    detail::Writer w(os);
    w.bytes("GATT");
    w.u32(kCheckpointVersion);
    w.u64(ckpt.epoch);
    w.u64(ckpt.config_hash());
    w.u32(static_cast<std::uint32_t>(ckpt.weights.size() + 2));
    for (const auto& r : ckpt.weights) w.record(r);
    w.record({"norm.mean", {3}, {ckpt.stats.mean.begin(), ckpt.stats.mean.end()}});
    w.record({"norm.std", {3}, {ckpt.stats.std.begin(), ckpt.stats.std.end()}});
    w.u64(ckpt.optimizer_step);
    w.u32(static_cast<std::uint32_t>(ckpt.optimizer.size()));
    for (const auto& r : ckpt.optimizer) w.record(r);
    w.u64(ckpt.config.size());
    w.bytes(ckpt.config);
    if (!os) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  detail::Reader r(is, std::filesystem::file_size(path));
  if (r.bytes(4) != "GATT") throw IncompatibleError("checkpoint: bad magic in " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IncompatibleError("checkpoint: unsupported format version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.epoch = r.u64();
  const std::uint64_t hash = r.u64();
  const std::uint32_t n = r.u32();
  bool have_mean = false, have_std = false;
  for (std::uint32_t i = 0; i < n; ++i) {
    ArrayRecord rec = r.record();
    if (rec.name == "norm.mean" || rec.name == "norm.std") {
      if (rec.data.size() != 3) throw IncompatibleError("checkpoint: malformed " + rec.name);
      auto& dst = rec.name == "norm.mean" ? ckpt.stats.mean : ckpt.stats.std;
      std::copy(rec.data.begin(), rec.data.end(), dst.begin());
      (rec.name == "norm.mean" ? have_mean : have_std) = true;
    } else {
      ckpt.weights.push_back(std::move(rec));
    }
  }
  if (!have_mean || !have_std) throw IncompatibleError("checkpoint: normalization stats missing");
  ckpt.optimizer_step = r.u64();
  const std::uint32_t m = r.u32();
  for (std::uint32_t i = 0; i < m; ++i) ckpt.optimizer.push_back(r.record());
  ckpt.config = r.bytes(r.u64());
  if (r.remaining() != 0) throw IncompatibleError("checkpoint: trailing bytes");
  if (ckpt.config_hash() != hash) throw IncompatibleError("checkpoint: config hash mismatch");
  return ckpt;
}

inline std::vector<ArrayRecord> snapshot(const std::vector<NamedTensor>& params) {
  std::vector<ArrayRecord> out;
  out.reserve(params.size());
  for (const auto& p : params) {
    out.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  }
  return out;
}

/// Copies stored values into `params`, matching by name and shape.
inline void restore(const std::vector<NamedTensor>& params, const std::vector<ArrayRecord>& records) {
  for (const auto& p : params) {
    const ArrayRecord* rec = nullptr;
    for (const auto& r : records) {
      if (r.name == p.name) rec = &r;
    }
    if (rec == nullptr) throw IncompatibleError("checkpoint: missing tensor '" + p.name + "'");
    if (rec->shape != p.tensor.shape()) {
      throw IncompatibleError("checkpoint: tensor '" + p.name + "' has shape " + shape_str(rec->shape) +
                              ", model expects " + shape_str(p.tensor.shape()));
    }
    Tensor t = p.tensor;
    std::copy(rec->data.begin(), rec->data.end(), t.mutable_data().begin());
  }
  if (records.size() != params.size()) {
    throw IncompatibleError("checkpoint: holds " + std::to_string(records.size()) + " tensors, model has " +
                            std::to_string(params.size()));
  }
}

inline std::vector<ArrayRecord> snapshot_optimizer(const Adam& adam) {
  std::vector<ArrayRecord> out;
  const auto& params = adam.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& mom = adam.moments()[i];
    if (mom.m.empty()) continue;
    out.push_back({"adam.m." + params[i].name, params[i].tensor.shape(), mom.m});
    out.push_back({"adam.v." + params[i].name, params[i].tensor.shape(), mom.v});
  }
  return out;
}

inline void restore_optimizer(Adam& adam, const std::vector<ArrayRecord>& records, std::uint64_t step) {
  const auto& params = adam.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& mom = adam.moments()[i];
    mom = {};
    for (const auto& r : records) {
      if (r.data.size() != params[i].tensor.numel()) continue;
      if (r.name == "adam.m." + params[i].name) mom.m = r.data;
      if (r.name == "adam.v." + params[i].name) mom.v = r.data;
    }
    if (mom.m.empty() != mom.v.empty()) {
      throw IncompatibleError("checkpoint: incomplete moments for '" + params[i].name + "'");
    }
  }
  adam.set_steps(step);
}

}  // namespace gridattn
