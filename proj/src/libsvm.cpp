// Copyright 2026 The localsgd Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "localsgd/libsvm.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <string_view>
#include <utility>
#include <vector>

#include "localsgd/errors.hpp"

namespace localsgd {
namespace {

struct SparseRow {
  double label = 0.0;
  std::vector<std::pair<Index, double>> entries;
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view token, std::size_t line, const char* what) {
  double value = 0.0;
  // from_chars rejects an explicit plus sign, which LIBSVM labels often carry.
  if (token.size() > 1 && token.front() == '+' && token[1] != '-') token.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(value)) {
    throw ParseError(std::string("bad ") + what + " '" + std::string(token) + "'", line);
  }
  return value;
}

// Returns false for blank and comment-only lines.
bool parse_line(std::string_view raw, std::size_t line, SparseRow& row) {
  const auto hash = raw.find('#');
  if (hash != std::string_view::npos) raw = raw.substr(0, hash);
  std::string_view s = trim(raw);
  if (s.empty()) return false;
  row.entries.clear();
  bool have_label = false;
  Index previous = 0;
  while (!s.empty()) {
    const auto end = s.find_first_of(" \t");
    const std::string_view token = s.substr(0, end);
    s = end == std::string_view::npos ? std::string_view{} : trim(s.substr(end));
    if (!have_label) {
      row.label = parse_double(token, line, "label");
      have_label = true;
      continue;
    }
    const auto colon = token.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError("expected index:value, got '" + std::string(token) + "'", line);
    }
    const std::string_view idx_text = token.substr(0, colon);
    long long idx = 0;
    const auto [ptr, ec] =
        std::from_chars(idx_text.data(), idx_text.data() + idx_text.size(), idx);
    if (ec != std::errc() || ptr != idx_text.data() + idx_text.size() || idx < 1) {
      throw ParseError("bad feature index '" + std::string(idx_text) + "'", line);
    }
    if (idx <= previous) throw ParseError("feature indices must be strictly increasing", line);
    previous = static_cast<Index>(idx);
    row.entries.emplace_back(previous - 1, parse_double(token.substr(colon + 1), line, "value"));
  }
  return true;
}

double map_label(double label, Task task, std::size_t line) {
  if (task == Task::regression) return label;
  if (label == 1.0) return 1.0;
  if (label == -1.0 || label == 0.0) return -1.0;
  throw ParseError("classification label must be -1, 0 or +1", line);
}

}  // namespace

Dataset read_libsvm(std::istream& in, Task task, Index dim_hint) {
  std::vector<SparseRow> rows;
  Index dim = dim_hint;
  std::string text;
  std::size_t line = 0;
  SparseRow row;
  while (std::getline(in, text)) {
    ++line;
    if (!parse_line(text, line, row)) continue;
    row.label = map_label(row.label, task, line);
    if (!row.entries.empty()) dim = std::max(dim, row.entries.back().first + 1);
    rows.push_back(row);
  }
  if (rows.empty()) throw ParseError("no data rows", line);
  if (dim_hint > 0 && dim > dim_hint) {
    throw ParseError("feature index exceeds the declared dimension", line);
  }
  if (dim == 0) throw ParseError("all rows are empty", line);

  Dataset data;
  data.task = task;
  data.source = DataSource::file;
  data.features = RowMatrix::Zero(static_cast<Index>(rows.size()), dim);
  data.labels.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Index>(i);
    data.labels[r] = rows[i].label;
    for (const auto& [j, v] : rows[i].entries) data.features(r, j) = v;
  }
  data.validate();
  return data;
}

Dataset read_libsvm_file(const std::string& path, Task task, Index dim_hint) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data file '" + path + "'");
  return read_libsvm(in, task, dim_hint);
}

LibsvmScan scan_libsvm(std::istream& in) {
  LibsvmScan scan;
  std::string text;
  std::size_t line = 0;
  SparseRow row;
  while (std::getline(in, text)) {
    ++line;
    if (!parse_line(text, line, row)) continue;
    if (scan.rows == 0) {
      scan.label_min = scan.label_max = row.label;
    } else {
      scan.label_min = std::min(scan.label_min, row.label);
      scan.label_max = std::max(scan.label_max, row.label);
    }
    ++scan.rows;
    if (row.label > 0.0) {
      ++scan.positive;
    } else {
      ++scan.negative;
    }
    scan.nonzeros += row.entries.size();
    double sq = 0.0;
    for (const auto& [j, v] : row.entries) {
      scan.dim = std::max(scan.dim, j + 1);
      sq += v * v;
    }
    scan.max_row_norm = std::max(scan.max_row_norm, std::sqrt(sq));
  }
  return scan;
}

}  // namespace localsgd
