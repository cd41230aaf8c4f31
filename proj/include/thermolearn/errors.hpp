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

#ifndef THERMOLEARN_ERRORS_HPP
#define THERMOLEARN_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace thermolearn {

/// Base of every error raised by the library. The CLI maps subclasses onto
/// exit codes (see `exit_code_for`).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// State space larger than the enumeration cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Two objects that must live on the same space (or have equal lengths) do not.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary input. Carries the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Non-finite gradient or parameters escaping the confinement bound.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long t_index)
      : Error(what + " at step " + std::to_string(t_index)), t_index_(t_index) {}
  long t_index() const noexcept { return t_index_; }

 private:
  long t_index_;
};

/// Algebraic identity broken beyond tolerance; signals a bug, never user error.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class IncompleteLogError : public Error {
 public:
  using Error::Error;
};

/// No flat window was found in a variance curve.
class NotStationaryError : public Error {
 public:
  NotStationaryError(const std::string& what, std::vector<double> curve)
      : Error(what), curve_(std::move(curve)) {}
  const std::vector<double>& variance_curve() const noexcept { return curve_; }

 private:
  std::vector<double> curve_;
};

class BurnInError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration. `field` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace thermolearn

#endif  // THERMOLEARN_ERRORS_HPP
