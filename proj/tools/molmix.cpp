// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "molmix/error.hpp"
#include "molmix/run.hpp"
#include "molmix/synthdata.hpp"

namespace fs = std::filesystem;
using namespace molmix;

namespace {

enum ExitCode {
  kOk = 0,
  kUsage = 1,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
  kInternal = 5,
};

int exit_code(const Error &e) {
  switch (e.category()) {
  case ErrorCategory::kConfig:
    return kConfig;
  case ErrorCategory::kData:
    return kData;
  case ErrorCategory::kNumeric:
    return kNumeric;
  case ErrorCategory::kInternal:
    return kInternal;
  }
  return kInternal;
}

void log_line(const std::string &s) {
  std::cerr << s << "\n";
}

void write_file(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
}

int cmd_ingest(const std::string &config) {
  const auto cfg = run::RunConfig::load(config);
  const auto data = run::ingest(cfg);
  std::cout << run::ingest_stats(cfg, data).dump(2) << "\n";
  for (std::size_t i = 0; i < data.reports.size(); ++i) {
    for (const auto &[line, reason]: data.reports[i].skipped) {
      log_line(cfg.datasets[i].name + ": skipped line " + std::to_string(line) + ": "
               + reason);
    }
  }
  return kOk;
}

int cmd_featurize(const std::string &config) {
  const auto cfg = run::RunConfig::load(config);
  const auto p = run::prepare(cfg);
  run::Json j { { "molecules", p.joint.size() },
                { "featurized", p.featurize_stats.featurized },
                { "cache_hits", p.featurize_stats.cache_hits },
                { "corrupted_cache_entries", p.featurize_stats.corrupted } };
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_split(const std::string &config, std::optional<std::uint64_t> seed,
              const std::string &out) {
  auto cfg = run::RunConfig::load(config);
  if (seed) {
    cfg.split_seed = *seed;
  }
  fs::path dir = out.empty() ? cfg.split_dir : fs::path(out);
  if (dir.empty()) {
    throw ConfigError("split: pass --out or set splits.dir in the config");
  }
  cfg.split_dir.clear();
  const auto data = run::ingest(cfg);
  const auto splits = run::splits_for(cfg, data);
  run::write_splits(dir, splits);
  std::cout << run::split_stats(splits).dump(2) << "\n";
  log_line("wrote splits to " + dir.string());
  return kOk;
}

int cmd_train(const std::string &config, const std::string &out_arg,
              std::optional<int> epochs, bool quiet) {
  auto cfg = run::RunConfig::load(config);
  if (epochs) {
    cfg.train.epochs = *epochs;
    cfg.validate();
  }
  const fs::path out = out_arg.empty() ? cfg.output_dir : fs::path(out_arg);
  if (out.empty()) {
    throw ConfigError("train: pass --out or set output_dir in the config");
  }
  const auto outcome = run::run_train(cfg, out, quiet ? run::Logger {} : log_line);
  std::cout << "digest " << outcome.digest << "\n"
            << "parameters " << outcome.model->num_params() << "\n"
            << "output " << fs::absolute(out).string() << "\n";
  return kOk;
}

int cmd_eval(const std::string &checkpoint, const std::string &split, const std::string &out) {
  if (!fs::exists(checkpoint)) {
    throw DataError("checkpoint not found: " + checkpoint);
  }
  data::SplitTag tag;
  try {
    tag = data::parse_split_tag(split);
  } catch (const Error &e) {
    throw ConfigError(e.what());
  }
  const auto report = run::run_eval(checkpoint, tag, log_line);
  const auto one = std::span(&report, 1);
  std::cout << mt::to_json(one) << "\n";
  if (!out.empty()) {
    fs::create_directories(out);
    write_file(fs::path(out) / ("eval_" + split + ".csv"), mt::to_csv(one));
    write_file(fs::path(out) / ("eval_" + split + ".json"), mt::to_json(one));
  }
  return kOk;
}

int cmd_params(const std::string &config) {
  const auto cfg = run::RunConfig::load(config);
  data::JointDataset ds;
  for (const auto &t: cfg.tasks) {
    data::TaskData td;
    td.spec = t;
    ds.tasks.push_back(std::move(td));
  }
  const gnn::Model model(run::resolve_model(cfg, ds));
  std::cout << model.num_params() << "\n";
  return kOk;
}

int cmd_synth(const std::string &out, std::uint64_t seed, int size, int epochs) {
  const auto path = synth::write_toy_mix(out, seed, size, epochs);
  std::cout << path.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app { "Multi-task molecular graph learning" };
  app.require_subcommand(1);

  std::string config, out, checkpoint, split;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  bool quiet = false;
  std::uint64_t synth_seed = 0;
  int synth_size = 240, synth_epochs = 20;

  auto *ingest = app.add_subcommand("ingest", "Ingest datasets and print label statistics");
  ingest->add_option("--config", config, "Run configuration (YAML)")->required();

  auto *featurize = app.add_subcommand("featurize", "Featurize all molecules into the cache");
  featurize->add_option("--config", config, "Run configuration (YAML)")->required();

  auto *split_cmd = app.add_subcommand("split", "Assign train/val/test/test_seen splits");
  split_cmd->add_option("--config", config, "Run configuration (YAML)")->required();
  split_cmd->add_option("--seed", seed, "Split seed (defaults to the config)");
  split_cmd->add_option("--out", out, "Directory for <dataset>.json split files");

  auto *train_cmd = app.add_subcommand("train", "Train a model and write a run directory");
  train_cmd->add_option("--config", config, "Run configuration (YAML)")->required();
  train_cmd->add_option("--out", out, "Output directory");
  train_cmd->add_option("--epochs", epochs, "Override the number of epochs");
  train_cmd->add_flag("--quiet", quiet, "Suppress per-epoch logging");

  auto *eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  eval_cmd->add_option("--checkpoint", checkpoint, "model.ckpt from a train run")->required();
  eval_cmd->add_option("--split", split, "train, val, test or test_seen")->required();
  eval_cmd->add_option("--out", out, "Also write eval_<split>.csv/.json here");

  auto *params = app.add_subcommand("params", "Print the parameter count of a config");
  params->add_option("--config", config, "Run configuration (YAML)")->required();

  auto *synth_cmd = app.add_subcommand("synth", "Write a synthetic three-dataset mix");
  synth_cmd->add_option("--out", out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth_seed, "Generator seed");
  synth_cmd->add_option("--size", synth_size, "Molecules in the primary dataset");
  synth_cmd->add_option("--epochs", synth_epochs, "Epochs in the generated config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*ingest) {
      return cmd_ingest(config);
    }
    if (*featurize) {
      return cmd_featurize(config);
    }
    if (*split_cmd) {
      return cmd_split(config, seed, out);
    }
    if (*train_cmd) {
      return cmd_train(config, out, epochs, quiet);
    }
    if (*eval_cmd) {
      return cmd_eval(checkpoint, split, out);
    }
    if (*params) {
      return cmd_params(config);
    }
    if (*synth_cmd) {
      return cmd_synth(out, synth_seed, synth_size, synth_epochs);
    }
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception &e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}
