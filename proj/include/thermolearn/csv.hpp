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

#ifndef THERMOLEARN_CSV_HPP
#define THERMOLEARN_CSV_HPP

#include <concepts>
#include <cstddef>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "thermolearn/errors.hpp"
#include "thermolearn/numeric.hpp"

namespace thermolearn {

inline constexpr std::string_view kCsvSchemaLine = "#thermolearn-csv v1";

/// Writes the schema line and a header, then rows of the same width.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::vector<std::string> columns) : out_(&out), width_(columns.size()) {
    *out_ << kCsvSchemaLine << '\n';
    line(columns);
  }

  template <class... Cells>
  void row(const Cells&... cells) {
    std::vector<std::string> v{cell(cells)...};
    if (v.size() != width_) throw ShapeError("csv row width differs from header");
    line(v);
  }

  void row_strings(const std::vector<std::string>& v) {
    if (v.size() != width_) throw ShapeError("csv row width differs from header");
    line(v);
  }

  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double x) { return format_double(x); }
  template <std::integral I>
  static std::string cell(I x) {
    return std::to_string(x);
  }

 private:
  void line(const std::vector<std::string>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) *out_ << (i ? "," : "") << v[i];
    *out_ << '\n';
  }

  std::ostream* out_;
  std::size_t width_;
};

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw IndexError("no csv column " + std::string(name));
  }
  double number(std::size_t r, std::string_view name) const { return std::stod(rows.at(r).at(column(name))); }
};

/// Parses a file written by CsvWriter. Unknown schema lines are rejected.
inline CsvTable read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvSchemaLine)
    throw FormatError("csv: missing or unknown schema version line", 0);
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  CsvTable t;
  std::size_t offset = line.size() + 1;
  if (!std::getline(in, line)) throw FormatError("csv: missing header", offset);
  t.columns = split(line);
  offset += line.size() + 1;
  while (std::getline(in, line)) {
    auto r = split(line);
    if (!line.empty() && r.size() != t.columns.size()) throw FormatError("csv: row width differs from header", offset);
    if (!line.empty()) t.rows.push_back(std::move(r));
    offset += line.size() + 1;
  }
  return t;
}

}  // namespace thermolearn

#endif  // THERMOLEARN_CSV_HPP
