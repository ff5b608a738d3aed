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

#include "qbit/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "qbit/error.hpp"

namespace qbit {
namespace {

bool power_of_two_level(int k) { return k == 1 || k == 2 || k == 4 || k == 8; }

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

BitwidthSchedule BitwidthSchedule::from_bits(std::span<const int> k_w, int k_a) {
  BitwidthSchedule s;
  for (std::size_t i = 0; i < k_w.size(); ++i) {
    s.layers.push_back({"L" + std::to_string(i), k_w[i], k_a, true,
                        LayerSection::Conv});
  }
  return s;
}

std::vector<int> BitwidthSchedule::quantized_weight_bits() const {
  std::vector<int> out;
  for (const auto& l : layers) {
    if (l.quantized) out.push_back(l.k_w);
  }
  return out;
}

std::vector<ScheduleViolation> validate_schedule(const BitwidthSchedule& s) {
  std::vector<ScheduleViolation> v;
  if (s.layers.empty()) {
    v.push_back({0, "schedule is empty"});
    return v;
  }
  const ScheduleEntry* prev = nullptr;
  const ScheduleEntry* first = nullptr;
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    const ScheduleEntry& e = s.layers[i];
    if (!e.quantized) continue;
    const std::string at = "layer " + std::to_string(i) + " (" + e.name + ")";
    if (!power_of_two_level(e.k_w)) {
      v.push_back({i, at + ": k_w = " + std::to_string(e.k_w) +
                          " is not one of 1, 2, 4, 8"});
    }
    if (!first) {
      first = &e;
    } else if (e.k_a != first->k_a) {
      v.push_back({i, at + ": k_a = " + std::to_string(e.k_a) +
                          " differs from " + std::to_string(first->k_a)});
    }
    if (prev) {
      if (e.k_w > prev->k_w) {
        v.push_back({i, at + ": k_w increases from " +
                            std::to_string(prev->k_w) + " to " +
                            std::to_string(e.k_w)});
      } else if (e.k_w != prev->k_w && 2 * e.k_w != prev->k_w) {
        v.push_back({i, at + ": step " + std::to_string(prev->k_w) + " -> " +
                            std::to_string(e.k_w) +
                            " is neither equal nor a halving"});
      }
    }
    prev = &e;
  }
  if (!first) v.push_back({0, "schedule has no quantized layers"});
  return v;
}

double average_bitwidth(const BitwidthSchedule& s,
                        std::span<const LayerParamCount> counts) {
  std::size_t c = 0;
  long double weighted = 0.0L;
  long double total = 0.0L;
  for (const auto& e : s.layers) {
    if (!e.quantized) continue;
    if (c >= counts.size()) {
      throw InvalidArgument("average_bitwidth: no parameter count for layer " +
                            e.name);
    }
    const LayerParamCount& pc = counts[c++];
    if (pc.name != e.name) {
      throw InvalidArgument("average_bitwidth: count for '" + pc.name +
                            "' does not match layer '" + e.name + "'");
    }
    if (pc.count <= 0) {
      throw InvalidArgument("average_bitwidth: non-positive count for " +
                            pc.name);
    }
    weighted += static_cast<long double>(e.k_w) * pc.count;
    total += pc.count;
  }
  if (c != counts.size()) {
    throw InvalidArgument("average_bitwidth: " + std::to_string(counts.size()) +
                          " counts for " + std::to_string(c) +
                          " quantized layers");
  }
  if (c == 0) throw InvalidArgument("average_bitwidth: no quantized layers");
  return static_cast<double>(weighted / total);
}

double round_decimal(double x, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(x * scale) / scale;
}

SizeReport size_report(const BitwidthSchedule& s,
                       std::span<const LayerParamCount> counts, int baseline_k) {
  if (baseline_k < 1) {
    throw InvalidArgument("size_report: baseline bitwidth must be positive");
  }
  SizeReport r;
  r.baseline_k = baseline_k;
  r.average_bits = average_bitwidth(s, counts);
  r.average_bits_rounded = round_decimal(r.average_bits, 2);
  std::size_t c = 0;
  int max_k = 0;
  for (const auto& e : s.layers) {
    if (!e.quantized) continue;
    const LayerParamCount& pc = counts[c++];
    LayerSize ls{e.name, pc.count, e.k_w, pc.count * e.k_w,
                 (pc.count * e.k_w + 7) / 8};
    r.total_params += ls.params;
    r.total_bits += ls.bits;
    r.total_bytes += ls.bytes;
    r.baseline_bits += pc.count * baseline_k;
    r.baseline_bytes += (pc.count * baseline_k + 7) / 8;
    max_k = std::max(max_k, e.k_w);
    r.layers.push_back(std::move(ls));
  }
  r.savings = 1.0 - r.average_bits / static_cast<double>(baseline_k);
  r.baseline_below_max = baseline_k < max_k;
  if (r.baseline_below_max) {
    warn("size_report: baseline " + std::to_string(baseline_k) +
         "-bit is below the schedule's widest layer (" + std::to_string(max_k) +
         "-bit)");
  }
  return r;
}

std::string format_size_report(const SizeReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %14s %4s %16s %14s\n", "layer",
                "params", "k_w", "bits", "bytes");
  os << line;
  for (const auto& l : r.layers) {
    std::snprintf(line, sizeof line, "%-16s %14lld %4d %16lld %14lld\n",
                  l.name.c_str(), static_cast<long long>(l.params), l.k_w,
                  static_cast<long long>(l.bits),
                  static_cast<long long>(l.bytes));
    os << line;
  }
  std::snprintf(line, sizeof line, "%-16s %14lld %4s %16lld %14lld\n", "total",
                static_cast<long long>(r.total_params), "",
                static_cast<long long>(r.total_bits),
                static_cast<long long>(r.total_bytes));
  os << line;
  os << "average_bitwidth_raw\t" << format_fixed(r.average_bits, 6) << '\n';
  os << "average_bitwidth\t" << format_fixed(r.average_bits_rounded, 2) << '\n';
  os << "baseline_k\t" << r.baseline_k << '\n';
  os << "baseline_bits\t" << r.baseline_bits << '\n';
  os << "baseline_bytes\t" << r.baseline_bytes << '\n';
  os << "savings\t" << format_fixed(100.0 * r.savings, 2) << "%\n";
  return os.str();
}

BitwidthSchedule plan_schedule(std::span<const WeightGroup> groups, int k_start,
                               int k_floor, int k_a) {
  if (!power_of_two_level(k_start) || !power_of_two_level(k_floor)) {
    throw InvalidArgument("plan_schedule: k_start and k_floor must be 1, 2, 4 or 8");
  }
  if (k_start < k_floor) {
    throw InvalidArgument("plan_schedule: k_start must be >= k_floor");
  }
  BitwidthSchedule s;
  int k = k_start;
  bool any = false;
  for (const auto& g : groups) {
    ScheduleEntry e{g.name, 32, 32, g.quantizable, g.section};
    if (g.quantizable) {
      e.k_w = k;
      e.k_a = k_a;
      k = std::max(k / 2, k_floor);
      any = true;
    }
    s.layers.push_back(std::move(e));
  }
  if (!any) throw InvalidArgument("plan_schedule: no quantizable layers");
  return s;
}

std::vector<int> ScheduleString::all() const {
  std::vector<int> out = conv;
  out.insert(out.end(), fc.begin(), fc.end());
  return out;
}

std::string ScheduleString::str() const {
  std::string out;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    if (i) out += '-';
    out += std::to_string(conv[i]);
  }
  if (has_fc_section) {
    out += '/';
    for (std::size_t i = 0; i < fc.size(); ++i) {
      if (i) out += '-';
      out += std::to_string(fc[i]);
    }
  }
  return out;
}

ScheduleString parse_schedule_string(std::string_view text) {
  auto fail = [&](const std::string& why) -> ConfigError {
    return ConfigError("schedule '" + std::string(text) + "': " + why, 0,
                       "schedule");
  };
  auto parse_section = [&](std::string_view part, std::vector<int>& out) {
    if (part.empty()) throw fail("empty section");
    std::size_t pos = 0;
    while (true) {
      const std::size_t dash = part.find('-', pos);
      const std::string_view tok =
          part.substr(pos, dash == std::string_view::npos ? part.size() - pos
                                                          : dash - pos);
      if (tok.empty() || tok.size() > 2 ||
          !std::all_of(tok.begin(), tok.end(),
                       [](char ch) { return ch >= '0' && ch <= '9'; })) {
        throw fail("bad bitwidth token '" + std::string(tok) + "'");
      }
      const int k = std::stoi(std::string(tok));
      if (k < 1 || k > 8) throw fail("bitwidth " + std::to_string(k) + " outside 1..8");
      out.push_back(k);
      if (dash == std::string_view::npos) break;
      pos = dash + 1;
    }
  };
  ScheduleString s;
  const std::size_t slash = text.find('/');
  if (slash == std::string_view::npos) {
    parse_section(text, s.conv);
  } else {
    if (text.find('/', slash + 1) != std::string_view::npos) {
      throw fail("more than one '/'");
    }
    s.has_fc_section = true;
    parse_section(text.substr(0, slash), s.conv);
    parse_section(text.substr(slash + 1), s.fc);
  }
  return s;
}

BitwidthSchedule assign_schedule(std::span<const WeightGroup> groups,
                                 const ScheduleString& bits, int k_a) {
  std::vector<const WeightGroup*> q;
  for (const auto& g : groups) {
    if (g.quantizable) q.push_back(&g);
  }
  const std::vector<int> ks = bits.all();
  if (ks.size() != q.size()) {
    throw ConfigError("schedule '" + bits.str() + "' has " +
                          std::to_string(ks.size()) +
                          " entries for " + std::to_string(q.size()) +
                          " quantized layers",
                      0, "schedule");
  }
  if (bits.has_fc_section) {
    const auto n_conv = static_cast<std::size_t>(
        std::count_if(q.begin(), q.end(), [](const WeightGroup* g) {
          return g->section == LayerSection::Conv;
        }));
    if (n_conv != bits.conv.size()) {
      throw ConfigError("schedule '" + bits.str() + "' has " +
                            std::to_string(bits.conv.size()) +
                            " conv entries for " + std::to_string(n_conv) +
                            " quantized conv layers",
                        0, "schedule");
    }
  }
  BitwidthSchedule s;
  std::size_t next = 0;
  for (const auto& g : groups) {
    ScheduleEntry e{g.name, 32, 32, g.quantizable, g.section};
    if (g.quantizable) {
      e.k_w = ks[next++];
      e.k_a = k_a;
    }
    s.layers.push_back(std::move(e));
  }
  return s;
}

std::vector<LayerParamCount> quantized_counts(
    std::span<const WeightGroup> groups) {
  std::vector<LayerParamCount> out;
  for (const auto& g : groups) {
    if (g.quantizable) out.push_back({g.name, g.params});
  }
  return out;
}

}  // namespace qbit
