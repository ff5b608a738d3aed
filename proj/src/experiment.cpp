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

#include "qbit/experiment.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "qbit/error.hpp"

namespace qbit {
namespace {

[[noreturn]] void fail(const ConfigEntry& e, const std::string& why) {
  throw ConfigError("line " + std::to_string(e.line) + ", " + field_name(e) + ": " + why,
                    e.line, field_name(e));
}

struct LayerLine {
  std::string kind;
  std::map<std::string, std::string> opts;
  std::vector<std::string> flags;
};

LayerLine tokenize(const ConfigEntry& e) {
  const auto tokens = split_tokens(e.value);
  if (tokens.empty()) fail(e, "empty layer line");
  LayerLine line;
  line.kind = tokens[0];
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto eq = tokens[i].find('=');
    if (eq == std::string::npos) {
      line.flags.push_back(tokens[i]);
    } else {
      const std::string key = tokens[i].substr(0, eq);
      if (line.opts.count(key)) fail(e, "repeated option '" + key + "'");
      line.opts[key] = tokens[i].substr(eq + 1);
    }
  }
  return line;
}

std::size_t positive(const ConfigEntry& e, const std::string& key, const std::string& text) {
  const std::int64_t v = parse_int(e, text);
  if (v <= 0) fail(e, key + " must be positive");
  return static_cast<std::size_t>(v);
}

LayerDef make_layer(const ConfigEntry& e, const LayerLine& line) {
  static const std::map<std::string, LayerKind> kinds = {
      {"conv", LayerKind::Conv2d},   {"fc", LayerKind::Linear},
      {"bn", LayerKind::BatchNorm},  {"act", LayerKind::ClampAct},
      {"maxpool", LayerKind::MaxPool}, {"avgpool", LayerKind::AvgPool},
      {"residual", LayerKind::Residual}, {"params", LayerKind::Params}};
  const auto it = kinds.find(line.kind);
  if (it == kinds.end()) fail(e, "unknown layer kind '" + line.kind + "'");
  LayerDef d;
  d.kind = it->second;
  auto allow = [&](std::initializer_list<const char*> opts,
                   std::initializer_list<const char*> flags) {
    for (const auto& [k, v] : line.opts) {
      if (std::find_if(opts.begin(), opts.end(), [&](const char* o) { return k == o; }) ==
          opts.end()) {
        fail(e, "option '" + k + "' not valid for " + line.kind);
      }
    }
    for (const auto& f : line.flags) {
      if (std::find_if(flags.begin(), flags.end(), [&](const char* o) { return f == o; }) ==
          flags.end()) {
        fail(e, "flag '" + f + "' not valid for " + line.kind);
      }
    }
  };
  auto opt = [&](const char* key) -> const std::string* {
    const auto f = line.opts.find(key);
    return f == line.opts.end() ? nullptr : &f->second;
  };
  auto has_flag = [&](const char* f) {
    return std::find(line.flags.begin(), line.flags.end(), f) != line.flags.end();
  };
  switch (d.kind) {
    case LayerKind::Conv2d:
      allow({"name", "group", "out", "kernel", "stride", "pad"}, {"bias", "fixed", "output"});
      if (!opt("out") || !opt("kernel")) fail(e, "conv needs out= and kernel=");
      d.out_channels = positive(e, "out", *opt("out"));
      d.kernel = positive(e, "kernel", *opt("kernel"));
      d.stride = opt("stride") ? positive(e, "stride", *opt("stride")) : 1;
      d.padding = opt("pad") ? static_cast<std::size_t>(parse_int(e, *opt("pad"))) : 0;
      break;
    case LayerKind::Linear:
      allow({"name", "group", "out"}, {"bias", "fixed", "output"});
      if (!opt("out")) fail(e, "fc needs out=");
      d.out_channels = positive(e, "out", *opt("out"));
      d.section = LayerSection::FullyConnected;
      break;
    case LayerKind::BatchNorm:
      allow({"name", "eps", "momentum"}, {});
      if (opt("eps")) d.bn_eps = parse_double(e, *opt("eps"));
      if (opt("momentum")) d.bn_momentum = parse_double(e, *opt("momentum"));
      if (!(d.bn_eps >= 0.0)) fail(e, "eps must be non-negative");
      if (!(d.bn_momentum >= 0.0 && d.bn_momentum <= 1.0)) fail(e, "momentum must lie in [0, 1]");
      break;
    case LayerKind::ClampAct:
      allow({"name"}, {});
      break;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      allow({"name", "kernel", "stride"}, {});
      if (!opt("kernel")) fail(e, line.kind + " needs kernel=");
      d.kernel = positive(e, "kernel", *opt("kernel"));
      d.stride = opt("stride") ? positive(e, "stride", *opt("stride")) : d.kernel;
      break;
    case LayerKind::Residual:
      allow({"name", "group"}, {});
      break;
    case LayerKind::Params: {
      allow({"name", "group", "count", "section"}, {"fixed", "output"});
      if (!opt("name") || !opt("count")) fail(e, "params needs name= and count=");
      d.param_count = parse_int(e, *opt("count"));
      if (d.param_count <= 0) fail(e, "count must be positive");
      const std::string sec = opt("section") ? *opt("section") : "conv";
      if (sec == "conv") d.section = LayerSection::Conv;
      else if (sec == "fc") d.section = LayerSection::FullyConnected;
      else fail(e, "section must be conv or fc");
      break;
    }
  }
  if (opt("name")) d.name = *opt("name");
  if (opt("group")) d.group = *opt("group");
  d.bias = has_flag("bias");
  d.fixed = has_flag("fixed");
  d.output = has_flag("output");
  return d;
}

void inherit_group(std::vector<LayerDef>& layers, const std::string& group) {
  for (auto& l : layers) {
    if (l.group.empty() && l.has_weights()) l.group = group;
    inherit_group(l.branch, group);
    inherit_group(l.shortcut, group);
  }
}

Shape parse_input(const ConfigEntry& e) {
  Shape s;
  std::string_view rest = e.value;
  while (true) {
    const auto x = rest.find('x');
    s.push_back(positive(e, "input", std::string(rest.substr(0, x))));
    if (x == std::string_view::npos) break;
    rest = rest.substr(x + 1);
  }
  if (s.size() != 3) fail(e, "input must be CxHxW");
  return s;
}

std::size_t nonneg(const ConfigFile& cfg, const char* section, const char* key,
                   std::int64_t fallback) {
  const std::int64_t v = cfg.get_int(section, key, fallback);
  if (v < 0) {
    const ConfigEntry* e = cfg.find(section, key);
    fail(*e, "must be non-negative");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

NetworkDef parse_architecture(const ConfigFile& cfg) {
  cfg.require_known("architecture", {"input", "classes", "layer"});
  NetworkDef net;
  if (const ConfigEntry* e = cfg.find("architecture", "input")) net.input = parse_input(*e);
  net.classes = static_cast<std::size_t>(cfg.get_int("architecture", "classes", 0));

  // Stack of open residual blocks; `in_shortcut` marks which list receives layers.
  struct Open {
    LayerDef block;
    bool in_shortcut = false;
    const ConfigEntry* entry;
  };
  std::vector<Open> stack;
  auto sink = [&]() -> std::vector<LayerDef>& {
    if (stack.empty()) return net.layers;
    Open& top = stack.back();
    return top.in_shortcut ? top.block.shortcut : top.block.branch;
  };
  for (const ConfigEntry* e : cfg.all("architecture", "layer")) {
    const LayerLine line = tokenize(*e);
    if (line.kind == "shortcut") {
      if (stack.empty() || stack.back().in_shortcut) fail(*e, "shortcut outside a residual block");
      stack.back().in_shortcut = true;
      continue;
    }
    if (line.kind == "end") {
      if (stack.empty()) fail(*e, "end without residual");
      LayerDef block = std::move(stack.back().block);
      stack.pop_back();
      if (block.branch.empty()) fail(*e, "residual block has an empty branch");
      if (!block.group.empty()) {
        inherit_group(block.branch, block.group);
        inherit_group(block.shortcut, block.group);
      }
      sink().push_back(std::move(block));
      continue;
    }
    LayerDef d = make_layer(*e, line);
    if (d.kind == LayerKind::Residual) {
      stack.push_back({std::move(d), false, e});
      continue;
    }
    sink().push_back(std::move(d));
  }
  if (!stack.empty()) fail(*stack.back().entry, "residual block is not closed");
  if (net.layers.empty()) {
    throw ConfigError("architecture has no layers", 0, "architecture.layer");
  }
  assign_default_names(net);
  try {
    if (!net.input.empty()) net.output_shape();
    net.weight_groups();
  } catch (const InvalidArgument& ex) {
    throw ConfigError(std::string("architecture: ") + ex.what(), 0, "architecture.layer");
  }
  return net;
}

DataConfig parse_data_config(const ConfigFile& cfg) {
  cfg.require_known("data", {"kind", "dir", "mean", "std", "augment_pad", "augment_flip",
                             "validation", "train_limit", "test_limit"});
  DataConfig d;
  const std::string kind = cfg.get_string("data", "kind", std::string("mnist"));
  try {
    d.kind = parse_dataset_kind(kind);
  } catch (const InvalidArgument& ex) {
    fail(*cfg.find("data", "kind"), ex.what());
  }
  d.dir = cfg.get_string("data", "dir", std::string());
  auto list = [&](const char* key, std::vector<double> fallback) {
    const ConfigEntry* e = cfg.find("data", key);
    if (!e) return fallback;
    std::vector<double> out;
    std::string_view rest = e->value;
    while (true) {
      const auto c = rest.find(',');
      out.push_back(parse_double(*e, rest.substr(0, c)));
      if (c == std::string_view::npos) break;
      rest = rest.substr(c + 1);
    }
    return out;
  };
  const std::size_t channels = d.kind == DatasetKind::MnistIdx ? 1 : 3;
  d.normalization.mean = list("mean", std::vector<double>(channels, 0.5));
  d.normalization.std = list("std", std::vector<double>(channels, 0.5));
  for (const char* key : {"mean", "std"}) {
    const auto& v = std::string(key) == "mean" ? d.normalization.mean : d.normalization.std;
    if (v.size() != channels) {
      throw ConfigError("data." + std::string(key) + ": expected " + std::to_string(channels) +
                            " values",
                        cfg.find("data", key) ? cfg.find("data", key)->line : 0,
                        "data." + std::string(key));
    }
  }
  for (double s : d.normalization.std) {
    if (!(s > 0.0)) fail(*cfg.find("data", "std"), "must be positive");
  }
  d.augment.pad = nonneg(cfg, "data", "augment_pad", 0);
  d.augment.flip = cfg.get_bool("data", "augment_flip", false);
  d.validation_denominator = nonneg(cfg, "data", "validation", 10);
  d.train_limit = nonneg(cfg, "data", "train_limit", 0);
  d.test_limit = nonneg(cfg, "data", "test_limit", 0);
  return d;
}

ScheduleConfig parse_schedule_config(const ConfigFile& cfg) {
  cfg.require_known("schedule", {"weights", "activations", "quantize_first_activation"});
  ScheduleConfig s;
  s.weights = cfg.get_string("schedule", "weights", std::string("fp"));
  s.activations = static_cast<int>(cfg.get_int("schedule", "activations", 2));
  if (!valid_bitwidth(s.activations)) {
    fail(*cfg.find("schedule", "activations"), "must be 1..8 or 32");
  }
  s.quantize_first_activation = cfg.get_bool("schedule", "quantize_first_activation", true);
  return s;
}

TrainConfig parse_train_config(const ConfigFile& cfg) {
  cfg.require_known("training", {"optimizer", "lr", "momentum", "weight_decay", "milestones",
                                 "lr_factor", "batch_size", "epochs", "seed", "beta1",
                                 "beta2", "eps"});
  TrainConfig t;
  const std::string opt = cfg.get_string("training", "optimizer", std::string("sgd"));
  if (opt == "sgd") {
    t.optimizer = OptimizerKind::SgdMomentum;
  } else if (opt == "adam") {
    t.optimizer = OptimizerKind::Adam;
  } else {
    fail(*cfg.find("training", "optimizer"), "expected sgd or adam");
  }
  t.lr = cfg.get_double("training", "lr", t.lr);
  t.momentum = cfg.get_double("training", "momentum", t.momentum);
  t.weight_decay = cfg.get_double("training", "weight_decay", t.weight_decay);
  t.lr_factor = cfg.get_double("training", "lr_factor", t.lr_factor);
  t.adam_beta1 = cfg.get_double("training", "beta1", t.adam_beta1);
  t.adam_beta2 = cfg.get_double("training", "beta2", t.adam_beta2);
  t.adam_eps = cfg.get_double("training", "eps", t.adam_eps);
  if (const ConfigEntry* e = cfg.find("training", "milestones")) {
    for (std::int64_t m : parse_int_list(*e)) {
      if (m < 0) fail(*e, "milestones must be non-negative");
      t.milestones.push_back(static_cast<std::size_t>(m));
    }
  }
  t.batch_size = nonneg(cfg, "training", "batch_size", 128);
  t.epochs = nonneg(cfg, "training", "epochs", 1);
  t.seed = nonneg(cfg, "training", "seed", 0);
  try {
    t.validate();
  } catch (const ConfigError& ex) {
    const std::string field = ex.field();
    const auto dot = field.find('.');
    const ConfigEntry* e = cfg.find("training", field.substr(dot + 1));
    if (e) fail(*e, ex.what());
    throw;
  }
  return t;
}

void apply_schedule_text(NetworkDef& net, const std::string& text, int k_a) {
  const auto groups = net.weight_groups();
  BitwidthSchedule s;
  if (text == "fp" || text == "32") {
    for (const auto& g : groups) {
      s.layers.push_back({g.name, kFullPrecisionBits, kFullPrecisionBits, false, g.section});
    }
  } else {
    try {
      s = assign_schedule(groups, parse_schedule_string(text), k_a);
    } catch (const InvalidArgument& ex) {
      throw ConfigError(std::string("schedule: ") + ex.what(), 0, "schedule");
    }
    const auto violations = validate_schedule(s);
    if (!violations.empty()) {
      throw ConfigError("schedule: " + violations.front().message, 0, "schedule");
    }
  }
  net.apply_schedule(s);
}

Experiment parse_experiment(const ConfigFile& cfg) {
  for (const auto& e : cfg.entries()) {
    if (e.section != "architecture" && e.section != "data" && e.section != "schedule" &&
        e.section != "training") {
      fail(e, "unknown section '" + e.section + "'");
    }
  }
  Experiment x;
  x.net = parse_architecture(cfg);
  x.data = parse_data_config(cfg);
  x.schedule = parse_schedule_config(cfg);
  x.train = parse_train_config(cfg);
  x.net.quantize_first_activation = x.schedule.quantize_first_activation;
  apply_schedule_text(x.net, x.schedule.weights, x.schedule.activations);
  return x;
}

Experiment load_experiment(const std::filesystem::path& path) {
  return parse_experiment(ConfigFile::load(path));
}

ExperimentData load_experiment_data(const Experiment& x, const std::string& dir) {
  const std::filesystem::path root = resolve_data_dir(dir.empty() ? x.data.dir : dir);
  auto limited = [](Dataset d, std::size_t limit) {
    return limit == 0 || limit >= d.size() ? d : subset(d, 0, limit);
  };
  ExperimentData out;
  Dataset full = limited(load_dataset(x.data.kind, root, Split::Train), x.data.train_limit);
  out.test = limited(load_dataset(x.data.kind, root, Split::Test), x.data.test_limit);
  if (full.sample_shape != x.net.input) {
    throw ConfigError("architecture.input " + shape_to_string(x.net.input) +
                          " does not match dataset samples " +
                          shape_to_string(full.sample_shape),
                      0, "architecture.input");
  }
  if (x.data.validation_denominator > 0) {
    std::tie(out.train, out.val) = split_validation(full, x.data.validation_denominator);
  } else {
    out.train = std::move(full);
  }
  return out;
}

ExperimentOutcome run_experiment(const Experiment& x, const ExperimentData& data,
                                 const EpochCallback& on_epoch) {
  Network net(x.net, x.train.seed);
  ExperimentOutcome out;
  out.result = train(net, x.train,
                     {&data.train, &data.val, x.data.normalization, x.data.augment}, on_epoch);
  net.load_state(out.result.best_state);
  out.checkpoint = {net.def(), x.data.normalization, net.state()};
  out.model = deploy(net);
  out.model.normalization = x.data.normalization;
  out.test_accuracy = evaluate_packed(out.model, data.test);
  return out;
}

}  // namespace qbit
