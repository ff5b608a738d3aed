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
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qbit {

struct ConfigEntry {
  std::string section;
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// Flat "key = value" text with [section] headers and '#' comments. Keys may
// repeat (ordered lists such as architecture layers). Every accessor throws
// ConfigError carrying the line and "section.key" of the offending entry.
class ConfigFile {
 public:
  static ConfigFile parse(std::string_view text);
  static ConfigFile load(const std::filesystem::path& path);

  const std::vector<ConfigEntry>& entries() const { return entries_; }
  bool has_section(std::string_view section) const;
  std::vector<const ConfigEntry*> all(std::string_view section,
                                      std::string_view key) const;
  // Single-valued key; throws if repeated.
  const ConfigEntry* find(std::string_view section, std::string_view key) const;

  std::string get_string(std::string_view section, std::string_view key,
                         std::optional<std::string> fallback = {}) const;
  double get_double(std::string_view section, std::string_view key,
                    std::optional<double> fallback = {}) const;
  std::int64_t get_int(std::string_view section, std::string_view key,
                       std::optional<std::int64_t> fallback = {}) const;
  bool get_bool(std::string_view section, std::string_view key,
                std::optional<bool> fallback = {}) const;

  // Rejects keys in `section` not listed in `allowed`.
  void require_known(std::string_view section,
                     std::initializer_list<std::string_view> allowed) const;

 private:
  std::vector<ConfigEntry> entries_;
};

std::string field_name(const ConfigEntry& e);

// Whitespace-separated tokens.
std::vector<std::string> split_tokens(std::string_view text);
// Comma-separated integers ("80,120,160"); empty text gives an empty list.
std::vector<std::int64_t> parse_int_list(const ConfigEntry& e);
double parse_double(const ConfigEntry& e, std::string_view text);
std::int64_t parse_int(const ConfigEntry& e, std::string_view text);

}  // namespace qbit
