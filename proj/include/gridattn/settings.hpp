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

// Plain-text key = value settings with optional [section] headers.
// Keys are addressed as "section.key". Every read marks the key as known so
// leftovers can be rejected as typos.

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gridattn/error.hpp"

namespace gridattn {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

class Settings {
 public:
  Settings() = default;

  static Settings parse(std::string_view text, const std::string& origin = "<config>") {
    Settings s;
    s.origin_ = origin;
    std::string section;
    std::size_t line_no = 0;
    std::istringstream is{std::string(text)};
    std::string raw;
    while (std::getline(is, raw)) {
      ++line_no;
      std::string line = trim(raw.substr(0, raw.find('#')));
      if (line.empty()) continue;
      const std::string where = origin + ":" + std::to_string(line_no);
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": malformed section header");
        section = trim(std::string_view(line).substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      const std::string key = trim(std::string_view(line).substr(0, eq));
      if (key.empty()) throw ConfigError(where + ": empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (s.values_.count(full)) throw ConfigError(where + ": duplicate key '" + full + "'");
      s.values_[full] = trim(std::string_view(line).substr(eq + 1));
    }
    return s;
  }

  static Settings load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path.string());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get(const std::string& key, double fallback) {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    double v = 0.0;
    const std::string& s = it->second;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError(origin_ + ": key '" + key + "' expects a number, got '" + s + "'");
    }
    return v;
  }

  std::uint64_t get(const std::string& key, std::uint64_t fallback) {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::uint64_t v = 0;
    const std::string& s = it->second;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError(origin_ + ": key '" + key + "' expects a non-negative integer, got '" + s + "'");
    }
    return v;
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) {
    return static_cast<std::size_t>(get(key, static_cast<std::uint64_t>(fallback)));
  }

  bool get_bool(const std::string& key, bool fallback) {
    const std::string v = get(key, std::string(fallback ? "true" : "false"));
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(origin_ + ": key '" + key + "' expects true or false, got '" + v + "'");
  }

  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) {
    if (!has(key)) {
      used_.insert(key);
      return fallback;
    }
    std::vector<double> out;
    std::stringstream ss(get(key, std::string()));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string t = trim(item);
      double v = 0.0;
      auto res = std::from_chars(t.data(), t.data() + t.size(), v);
      if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw ConfigError(origin_ + ": key '" + key + "' expects a comma-separated number list");
      }
      out.push_back(v);
    }
    return out;
  }

  /// Throws naming the first key that no reader asked for.
  void reject_unknown() const {
    for (const auto& [key, value] : values_) {
      if (!used_.count(key)) throw ConfigError(origin_ + ": unknown key '" + key + "'");
    }
  }

 private:
  std::string origin_ = "<config>";
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

// Accumulates a resolved settings file section by section.
class SettingsWriter {
 public:
  void section(const std::string& name) {
    if (!text_.empty()) text_ += "\n";
    text_ += "[" + name + "]\n";
  }
  void put(const std::string& key, const std::string& value) { text_ += key + " = " + value + "\n"; }
  void put(const std::string& key, double value) { put(key, format_double(value)); }
  void put(const std::string& key, std::uint64_t value) { put(key, std::to_string(value)); }
  void put(const std::string& key, const char* value) { put(key, std::string(value)); }
  void put(const std::string& key, bool value) { put(key, std::string(value ? "true" : "false")); }
  void put(const std::string& key, const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) s += (i ? ", " : "") + format_double(values[i]);
    put(key, s);
  }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

}  // namespace gridattn
