// Copyright 2026 The qbit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qbit {

// Bad shapes, mismatched operands, malformed arguments.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input outside the domain an operation accepts (e.g. unit quantizer fed
// values outside [0, 1]).
class RangeViolation : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// A code that does not fit its declared bitwidth.
class CorruptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated serialized data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// NaN/Inf produced during a forward pass or training step.
class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(const std::string& what, std::ptrdiff_t layer = -1,
                 std::ptrdiff_t epoch = -1, std::ptrdiff_t step = -1)
      : std::runtime_error(what), layer_(layer), epoch_(epoch), step_(step) {}

  std::ptrdiff_t layer() const { return layer_; }
  std::ptrdiff_t epoch() const { return epoch_; }
  std::ptrdiff_t step() const { return step_; }

 private:
  std::ptrdiff_t layer_;
  std::ptrdiff_t epoch_;
  std::ptrdiff_t step_;
};

// Dataset files missing, with a bad magic number, or truncated. `offset` is
// the byte offset at which the problem was detected, or -1.
class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& what, std::ptrdiff_t offset = -1)
      : std::runtime_error(what), offset_(offset) {}
  std::ptrdiff_t offset() const { return offset_; }

 private:
  std::ptrdiff_t offset_;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line, std::string field)
      : std::runtime_error(what), line_(line), field_(std::move(field)) {}
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

using WarningHandler = std::function<void(std::string_view)>;

// Warnings go to stderr unless a handler is installed. Returns the previous
// handler.
WarningHandler set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

}  // namespace qbit
