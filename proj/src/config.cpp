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

#include "qbit/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "qbit/error.hpp"

namespace qbit {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const ConfigEntry& e, const std::string& why) {
  throw ConfigError("line " + std::to_string(e.line) + ", " + field_name(e) +
                        ": " + why,
                    e.line, field_name(e));
}

[[noreturn]] void missing(std::string_view section, std::string_view key) {
  const std::string field = std::string(section) + "." + std::string(key);
  throw ConfigError("missing required field " + field, 0, field);
}

}  // namespace

std::string field_name(const ConfigEntry& e) {
  return e.section.empty() ? e.key : e.section + "." + e.key;
}

ConfigFile ConfigFile::parse(std::string_view text) {
  ConfigFile cfg;
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                      : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError("line " + std::to_string(line_no) +
                              ": malformed section header",
                          line_no, std::string(line));
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                            ": expected 'key = value'",
                        line_no, std::string(line));
    }
    ConfigEntry e{section, std::string(trim(line.substr(0, eq))),
                  std::string(trim(line.substr(eq + 1))), line_no};
    if (e.key.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key",
                        line_no, section);
    }
    cfg.entries_.push_back(std::move(e));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot read config file " + path.string(), 0,
                      path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool ConfigFile::has_section(std::string_view section) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const ConfigEntry& e) { return e.section == section; });
}

std::vector<const ConfigEntry*> ConfigFile::all(std::string_view section,
                                                std::string_view key) const {
  std::vector<const ConfigEntry*> out;
  for (const auto& e : entries_) {
    if (e.section == section && e.key == key) out.push_back(&e);
  }
  return out;
}

const ConfigEntry* ConfigFile::find(std::string_view section,
                                    std::string_view key) const {
  const auto found = all(section, key);
  if (found.size() > 1) fail(*found[1], "repeated key");
  return found.empty() ? nullptr : found.front();
}

std::string ConfigFile::get_string(std::string_view section,
                                   std::string_view key,
                                   std::optional<std::string> fallback) const {
  if (const ConfigEntry* e = find(section, key)) return e->value;
  if (fallback) return *fallback;
  missing(section, key);
}

double ConfigFile::get_double(std::string_view section, std::string_view key,
                              std::optional<double> fallback) const {
  if (const ConfigEntry* e = find(section, key)) return parse_double(*e, e->value);
  if (fallback) return *fallback;
  missing(section, key);
}

std::int64_t ConfigFile::get_int(std::string_view section, std::string_view key,
                                 std::optional<std::int64_t> fallback) const {
  if (const ConfigEntry* e = find(section, key)) return parse_int(*e, e->value);
  if (fallback) return *fallback;
  missing(section, key);
}

bool ConfigFile::get_bool(std::string_view section, std::string_view key,
                          std::optional<bool> fallback) const {
  if (const ConfigEntry* e = find(section, key)) {
    if (e->value == "true" || e->value == "yes" || e->value == "1") return true;
    if (e->value == "false" || e->value == "no" || e->value == "0") return false;
    fail(*e, "expected a boolean, got '" + e->value + "'");
  }
  if (fallback) return *fallback;
  missing(section, key);
}

void ConfigFile::require_known(
    std::string_view section,
    std::initializer_list<std::string_view> allowed) const {
  for (const auto& e : entries_) {
    if (e.section != section) continue;
    if (std::find(allowed.begin(), allowed.end(), e.key) == allowed.end()) {
      fail(e, "unknown key");
    }
  }
}

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream is{std::string(text)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

double parse_double(const ConfigEntry& e, std::string_view text) {
  const std::string s(trim(text));
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    fail(e, "expected a number, got '" + s + "'");
  }
}

std::int64_t parse_int(const ConfigEntry& e, std::string_view text) {
  const std::string_view s = trim(text);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    fail(e, "expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::int64_t> parse_int_list(const ConfigEntry& e) {
  std::vector<std::int64_t> out;
  std::string_view rest = trim(e.value);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    out.push_back(parse_int(e, rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
    if (trim(rest).empty()) fail(e, "trailing comma");
  }
  return out;
}

}  // namespace qbit
