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

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qbit {

struct LayerParamCount {
  std::string name;
  std::int64_t count = 0;
};

enum class LayerSection : std::uint8_t { Conv = 0, FullyConnected = 1 };

// A unit of bitwidth assignment: a single weight layer, or several layers
// sharing one bitwidth (e.g. a residual stage).
struct WeightGroup {
  std::string name;
  std::int64_t params = 0;
  LayerSection section = LayerSection::Conv;
  bool quantizable = true;  // false for input/output layers kept at 32 bits
};

struct ScheduleEntry {
  std::string name;
  int k_w = 32;
  int k_a = 32;
  bool quantized = false;
  LayerSection section = LayerSection::Conv;

  friend bool operator==(const ScheduleEntry&, const ScheduleEntry&) = default;
};

struct BitwidthSchedule {
  std::vector<ScheduleEntry> layers;

  // Convenience: quantized layers named L0, L1, ... with the given k_w.
  static BitwidthSchedule from_bits(std::span<const int> k_w, int k_a = 2);

  std::vector<int> quantized_weight_bits() const;
  friend bool operator==(const BitwidthSchedule&,
                         const BitwidthSchedule&) = default;
};

struct ScheduleViolation {
  std::size_t index = 0;  // position in BitwidthSchedule::layers
  std::string message;
};

// Every violation among quantized layers: k_w outside {1, 2, 4, 8}, an
// increase, a step other than equal or halving, or non-uniform k_a.
std::vector<ScheduleViolation> validate_schedule(const BitwidthSchedule& s);

// sum k_i n_i / sum n_i over quantized layers. `counts` must name exactly
// the quantized layers, in order.
double average_bitwidth(const BitwidthSchedule& s,
                        std::span<const LayerParamCount> counts);

// Half-away-from-zero rounding to `decimals` places.
double round_decimal(double x, int decimals);

struct LayerSize {
  std::string name;
  std::int64_t params = 0;
  int k_w = 0;
  std::int64_t bits = 0;
  std::int64_t bytes = 0;  // ceil(params * k_w / 8)
};

struct SizeReport {
  std::vector<LayerSize> layers;
  std::int64_t total_params = 0;
  std::int64_t total_bits = 0;
  std::int64_t total_bytes = 0;
  double average_bits = 0.0;
  double average_bits_rounded = 0.0;
  int baseline_k = 0;
  std::int64_t baseline_bits = 0;
  std::int64_t baseline_bytes = 0;
  double savings = 0.0;  // 1 - average / baseline
  bool baseline_below_max = false;
};

SizeReport size_report(const BitwidthSchedule& s,
                       std::span<const LayerParamCount> counts, int baseline_k);

// Deterministic text table.
std::string format_size_report(const SizeReport& r);

// First quantizable group gets k_start, each following one half of its
// predecessor until k_floor, then k_floor. Non-quantizable groups stay at 32.
BitwidthSchedule plan_schedule(std::span<const WeightGroup> groups, int k_start,
                               int k_floor, int k_a = 2);

// Parsed "8-4-2-1-1-1/1": hyphen-separated k values; an optional "/"
// starts the fully-connected section.
struct ScheduleString {
  std::vector<int> conv;
  std::vector<int> fc;
  bool has_fc_section = false;

  std::vector<int> all() const;
  std::string str() const;
};

// Throws ConfigError (field "schedule") on grammar errors.
ScheduleString parse_schedule_string(std::string_view text);

// Maps a schedule string onto the quantizable groups in order. With a "/"
// section, conv and fully-connected counts must match separately.
BitwidthSchedule assign_schedule(std::span<const WeightGroup> groups,
                                 const ScheduleString& bits, int k_a);

std::vector<LayerParamCount> quantized_counts(
    std::span<const WeightGroup> groups);

}  // namespace qbit
