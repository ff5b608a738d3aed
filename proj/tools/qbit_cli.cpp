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

// qbit command-line tool: train, eval, size-report, pack.
//
// Exit codes:
//   0 success
//   1 unexpected failure
//   2 dataset missing or corrupt
//   3 configuration or schedule grammar error
//   4 model file format or shape mismatch
//   5 empty evaluation set
//   6 numeric divergence during training
//  64 command-line usage error
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "qbit/deploy.hpp"
#include "qbit/error.hpp"
#include "qbit/experiment.hpp"
#include "qbit/serialize.hpp"

namespace fs = std::filesystem;
using namespace qbit;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kDataset = 2,
  kConfig = 3,
  kFormat = 4,
  kEmpty = 5,
  kDiverged = 6,
  kUsage = 64,
};

struct EmptySet : std::runtime_error {
  using std::runtime_error::runtime_error;
};

PackedModel load_any_model(const fs::path& path) {
  if (!fs::exists(path)) throw FormatError("model file " + path.string() + " not found");
  const std::string magic = file_magic(path);
  if (magic == "QBC1") {
    const Checkpoint c = load_checkpoint(path);
    Network net(c.def, 0);
    net.load_state(c.state);
    PackedModel m = deploy(net);
    m.normalization = c.normalization;
    return m;
  }
  return load_model(path);
}

int cmd_train(const std::string& config, std::uint64_t seed, bool seed_set,
              const std::string& out_dir, const std::string& data_dir) {
  Experiment x = load_experiment(config);
  if (seed_set) x.train.seed = seed;
  const ExperimentData data = load_experiment_data(x, data_dir);
  if (data.test.size() == 0) throw EmptySet("test set is empty");

  fs::create_directories(out_dir);
  std::ofstream log(fs::path(out_dir) / "metrics.tsv", std::ios::trunc);
  if (!log) throw InvalidArgument("cannot write metrics log in " + out_dir);

  const ExperimentOutcome r = run_experiment(x, data, [&](const EpochMetrics& m) {
    const std::string line = format_metrics_line(m);
    log << line << '\n' << std::flush;
    std::cout << line << '\n' << std::flush;
  });
  save_checkpoint(r.checkpoint, fs::path(out_dir) / "checkpoint.qbc");
  const fs::path model_path = fs::path(out_dir) / "model.qbm";
  save_model(r.model, model_path);

  const double acc = evaluate_packed(load_model(model_path), data.test);
  std::printf("best_epoch\t%zu\nbest_val_acc\t%.4f\ntest_acc\t%.4f\n", r.result.best_epoch,
              r.result.best_val_acc, acc);
  return kOk;
}

int cmd_eval(const std::string& model_path, const std::string& data_dir,
             std::size_t limit) {
  const PackedModel m = load_any_model(model_path);
  const fs::path root = resolve_data_dir(data_dir);
  Dataset test = load_dataset(detect_dataset_kind(root), root, Split::Test);
  if (limit > 0 && limit < test.size()) test = subset(test, 0, limit);
  if (test.size() == 0) throw EmptySet("evaluation set in " + root.string() + " is empty");
  if (test.sample_shape != m.input) {
    throw FormatError("model input " + shape_to_string(m.input) +
                      " does not match dataset samples " + shape_to_string(test.sample_shape));
  }
  std::printf("samples\t%zu\naccuracy\t%.4f\n", test.size(), evaluate_packed(m, test));
  return kOk;
}

int cmd_size_report(const std::string& arch, const std::string& schedule, int baseline,
                    int k_a) {
  const NetworkDef net = parse_architecture(ConfigFile::load(arch));
  if (baseline < 1 || baseline > 8) {
    throw ConfigError("baseline must be 1..8, got " + std::to_string(baseline), 0, "baseline");
  }
  const auto groups = net.weight_groups();
  BitwidthSchedule s;
  try {
    s = assign_schedule(groups, parse_schedule_string(schedule), k_a);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("schedule: ") + e.what(), 0, "schedule");
  }
  for (const auto& v : validate_schedule(s)) {
    std::cerr << "qbit: warning: schedule entry " << v.index << ": " << v.message << '\n';
  }
  const auto counts = quantized_counts(groups);
  std::cout << format_size_report(size_report(s, counts, baseline));
  return kOk;
}

int cmd_pack(const std::string& model_path, const std::string& out) {
  const PackedModel m = load_any_model(model_path);
  save_model(m, out);
  const PackedModel back = load_model(out);
  if (!(back == m)) throw FormatError("round trip of " + out + " is not exact");
  std::printf("ops\t%zu\nquantized_payload_bytes\t%lld\nfile_bytes\t%llu\n", m.ops.size(),
              static_cast<long long>(quantized_payload_bytes(m)),
              static_cast<unsigned long long>(fs::file_size(out)));
  return kOk;
}

int report(const char* kind, const std::exception& e, int code) {
  std::cerr << "qbit: " << kind << ": " << e.what() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-precision quantized network engine"};
  app.require_subcommand(1);

  std::string config, out_dir, data_dir, model, arch, schedule, out_path;
  std::uint64_t seed = 0;
  std::size_t limit = 0;
  int baseline = 2, k_a = 2;

  auto* train_cmd = app.add_subcommand("train", "Train a network from a config file");
  train_cmd->add_option("--config", config, "Experiment config")->required();
  auto* seed_opt = train_cmd->add_option("--seed", seed, "Seed (overrides training.seed)");
  train_cmd->add_option("--out", out_dir, "Output directory")->required();
  train_cmd->add_option("--data", data_dir, "Dataset directory (overrides data.dir)");

  auto* eval_cmd = app.add_subcommand("eval", "Top-1 accuracy of a model on a test split");
  eval_cmd->add_option("--model", model, "QBM1 model or QBC1 checkpoint")->required();
  eval_cmd->add_option("--data", data_dir, "Dataset directory");
  eval_cmd->add_option("--limit", limit, "Evaluate only the first N samples");

  auto* size_cmd = app.add_subcommand("size-report", "Bitwidth and memory accounting");
  size_cmd->add_option("--arch", arch, "Architecture config")->required();
  size_cmd->add_option("--schedule", schedule, "Schedule string, e.g. 8-4-2-1-1-1/1")
      ->required();
  size_cmd->add_option("--baseline", baseline, "Homogeneous baseline bitwidth");
  size_cmd->add_option("--activations", k_a, "Activation bitwidth");

  auto* pack_cmd = app.add_subcommand("pack", "Write a packed QBM1 model");
  pack_cmd->add_option("--model", model, "QBC1 checkpoint or QBM1 model")->required();
  pack_cmd->add_option("--out", out_path, "Output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(config, seed, seed_opt->count() > 0, out_dir, data_dir);
    if (*eval_cmd) return cmd_eval(model, data_dir, limit);
    if (*size_cmd) return cmd_size_report(arch, schedule, baseline, k_a);
    if (*pack_cmd) return cmd_pack(model, out_path);
  } catch (const DatasetError& e) {
    return report("dataset error", e, kDataset);
  } catch (const ConfigError& e) {
    return report("config error", e, kConfig);
  } catch (const FormatError& e) {
    return report("model format error", e, kFormat);
  } catch (const CorruptionError& e) {
    return report("model format error", e, kFormat);
  } catch (const EmptySet& e) {
    return report("empty evaluation set", e, kEmpty);
  } catch (const NumericFailure& e) {
    return report("numeric failure", e, kDiverged);
  } catch (const std::exception& e) {
    return report("error", e, kFailure);
  }
  return kFailure;
}
