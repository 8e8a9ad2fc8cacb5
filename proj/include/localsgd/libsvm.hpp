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

#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

#include "localsgd/dataset.hpp"

namespace localsgd {

// Reader for the LIBSVM sparse text format:
//
//   <label> <index>:<value> <index>:<value> ...
//
// Indices are 1-based and strictly increasing within a line. Blank lines and
// '#' comments are skipped. Any malformed line raises ParseError with its
// line number. For classification, labels must be in {-1, +1} or {0, 1}
// (0 is mapped to -1).
Dataset read_libsvm(std::istream& in, Task task, Index dim_hint = 0);
Dataset read_libsvm_file(const std::string& path, Task task, Index dim_hint = 0);

struct LibsvmScan {
  std::size_t rows = 0;
  Index dim = 0;
  std::size_t nonzeros = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  double label_min = 0.0;
  double label_max = 0.0;
  double max_row_norm = 0.0;
};

// Sanity pass over a file without materializing a dense matrix.
LibsvmScan scan_libsvm(std::istream& in);

}  // namespace localsgd
