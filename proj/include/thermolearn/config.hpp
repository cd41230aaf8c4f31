// Copyright 2026 The thermolearn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef THERMOLEARN_CONFIG_HPP
#define THERMOLEARN_CONFIG_HPP

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "thermolearn/errors.hpp"

namespace thermolearn {

inline constexpr std::string_view kConfigSchemaVersion = "1";

/// Flat `key = value` document. `#` starts a comment. Later layers override
/// earlier ones through merge().
class Config {
 public:
  static Config parse(std::string_view text, const std::string& origin = "config") {
    Config c;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(n), "expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError(origin + ":" + std::to_string(n), "empty key");
      if (c.values_.count(key) != 0) throw ConfigError(key, "duplicate key");
      c.values_[key] = value;
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  /// Keys of `over` replace keys of *this.
  Config merged(const Config& over) const {
    Config c = *this;
    for (const auto& [k, v] : over.values_) c.values_[k] = v;
    return c;
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  /// Rejects keys outside `known` and a missing or unknown schema_version.
  void validate_keys(const std::set<std::string>& known) const {
    const auto v = values_.find("schema_version");
    if (v == values_.end()) throw ConfigError("schema_version", "missing");
    if (v->second != kConfigSchemaVersion) throw ConfigError("schema_version", "unsupported version " + v->second);
    for (const auto& [k, _] : values_)
      if (k != "schema_version" && known.count(k) == 0) throw ConfigError(k, "unknown key");
  }

  std::string str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) throw ConfigError(key, "missing required value");
    return it->second;
  }
  std::string str(const std::string& key, const std::string& fallback) const { return has(key) ? str(key) : fallback; }

  double real(const std::string& key) const { return to_real(key, str(key)); }
  double real(const std::string& key, double fallback) const { return has(key) ? real(key) : fallback; }

  std::uint64_t count(const std::string& key) const { return to_count(key, str(key)); }
  std::uint64_t count(const std::string& key, std::uint64_t fallback) const { return has(key) ? count(key) : fallback; }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split(str(key))) out.push_back(to_real(key, item));
    return out;
  }
  std::vector<double> reals(const std::string& key, std::vector<double> fallback) const {
    return has(key) ? reals(key) : fallback;
  }

  std::vector<std::uint64_t> counts(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const auto& item : split(str(key))) out.push_back(to_count(key, item));
    return out;
  }
  std::vector<std::uint64_t> counts(const std::string& key, std::vector<std::uint64_t> fallback) const {
    return has(key) ? counts(key) : fallback;
  }

  std::vector<std::string> strings(const std::string& key) const { return split(str(key)); }

  /// One `key = value` line per key in key order.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

 private:
  static std::string trim(std::string s) {
    auto issp = [](unsigned char ch) { return std::isspace(ch) != 0; };
    while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
    std::size_t b = 0;
    while (b < s.size() && issp(static_cast<unsigned char>(s[b]))) ++b;
    return s.substr(b);
  }

  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  static double to_real(const std::string& key, const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw ConfigError(key, "not a number: " + s);
    return v;
  }

  static std::uint64_t to_count(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw ConfigError(key, "not a non-negative integer: " + s);
    return v;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace thermolearn

#endif  // THERMOLEARN_CONFIG_HPP
