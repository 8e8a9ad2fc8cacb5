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

#include <cstdint>
#include <stdexcept>
#include <string>

namespace localsgd {

// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A problem definition violates its preconditions (non-positive spectrum,
// malformed dataset, ...).
class InvalidProblemError : public Error {
 public:
  using Error::Error;
};

// The reference-optimum solver did not reach the requested tolerance.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double grad_norm)
      : Error(what), grad_norm_(grad_norm) {}
  double grad_norm() const { return grad_norm_; }

 private:
  double grad_norm_;
};

class NumericInputError : public Error {
 public:
  using Error::Error;
};

// A non-finite iterate appeared during a run.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int phase, int step, int worker)
      : Error(what), phase_(phase), step_(step), worker_(worker) {}
  int phase() const { return phase_; }
  int step() const { return step_; }
  int worker() const { return worker_; }

 private:
  int phase_;
  int step_;
  int worker_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

// A bound was evaluated outside the parameter range where it is claimed.
class DomainError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class EnsembleError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ComparisonError : public Error {
 public:
  using Error::Error;
};

}  // namespace localsgd
