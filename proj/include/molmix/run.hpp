// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "molmix/batch.hpp"
#include "molmix/featstore.hpp"
#include "molmix/gnn.hpp"
#include "molmix/labels.hpp"
#include "molmix/splits.hpp"
#include "molmix/task.hpp"
#include "molmix/train.hpp"

namespace molmix::run {

using Json = nlohmann::ordered_json;

struct Preset {
  std::string name;
  int epochs = 300;
  int hidden = 128;
};

/// "toymix", "largemix" or "ultralarge"; throws ConfigError otherwise.
const Preset &preset(const std::string &name);

struct DatasetEntry {
  std::string name;
  std::filesystem::path path;
  std::string smiles_column = "smiles";
};

/// A run configuration. Relative paths resolve against the directory of the
/// config file. The model section leaves input widths and heads empty;
/// resolve_model fills them from the data.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string preset = "toymix";
  std::vector<DatasetEntry> datasets;
  std::string primary;  // defaults to the first dataset
  std::vector<TaskSpec> tasks;
  std::vector<int> head_widths;  // hidden widths of every task head
  std::map<std::string, std::vector<int>> task_head_widths;  // per task

  data::SplitRatios split_ratios;
  std::uint64_t split_seed = 0;
  std::filesystem::path split_dir;  // read <dataset>.json from here if set

  data::FeatStoreConfig featurization;
  std::filesystem::path cache_dir;  // empty: no cache

  gnn::ModelConfig model;
  train::TrainConfig train;

  std::filesystem::path output_dir;  // not part of the resolved config

  static RunConfig from_yaml(const std::string &text,
                             const std::filesystem::path &base_dir = {});
  static RunConfig load(const std::filesystem::path &path);

  void validate() const;
  std::vector<data::DatasetSchema> schemas() const;
  /// Every field with defaults filled in and absolute paths. Parses back
  /// through from_yaml to an equal configuration.
  Json to_json() const;
};

struct Ingested {
  std::vector<data::LabelTable> tables;
  std::vector<data::IngestReport> reports;

  std::vector<const data::LabelTable *> pointers() const;
};

/// Throws DataError when a dataset ends up with no molecules.
Ingested ingest(const RunConfig &cfg);

/// Per dataset: "# mols", "# G. labels", "# N. labels", "% G. sparsity",
/// "% N. sparsity" and ingest counters.
Json ingest_stats(const RunConfig &cfg, const Ingested &data);

std::map<std::string, data::SplitAssignment> splits_for(const RunConfig &cfg,
                                                        const Ingested &data);
void write_splits(const std::filesystem::path &dir,
                  const std::map<std::string, data::SplitAssignment> &splits);
Json split_stats(const std::map<std::string, data::SplitAssignment> &splits);

struct Prepared {
  Ingested ingested;
  std::map<std::string, data::SplitAssignment> splits;
  data::JointDataset joint;
  data::FeaturizeStats featurize_stats;
};

/// Ingest, split, join and featurize.
Prepared prepare(const RunConfig &cfg);

gnn::ModelConfig resolve_model(const RunConfig &cfg, const data::JointDataset &ds);

using Logger = std::function<void(const std::string &)>;

struct TrainOutcome {
  Json manifest;
  std::string digest;
  train::TrainResult result;
  std::unique_ptr<gnn::Model> model;
};

/// Trains and, when `out_dir` is non-empty, writes manifest.json,
/// metrics.csv, metrics.json, model.ckpt and splits/<dataset>.json there.
/// The manifest digest covers everything except its "runtime" section.
TrainOutcome run_train(const RunConfig &cfg, const std::filesystem::path &out_dir,
                       const Logger &log = {});

/// Loads a checkpoint, rebuilds its data and evaluates one split.
mt::MetricReport run_eval(const std::filesystem::path &checkpoint,
                          data::SplitTag split, const Logger &log = {});

/// SHA-256 of the manifest without "runtime" and "digest".
std::string manifest_digest(const Json &manifest);

}  // namespace molmix::run
