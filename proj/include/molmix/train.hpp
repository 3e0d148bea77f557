// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "molmix/batch.hpp"
#include "molmix/gnn.hpp"
#include "molmix/matrix.hpp"
#include "molmix/multitask.hpp"
#include "molmix/splits.hpp"

namespace molmix::train {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled

  void validate() const;
};

class Adam {
 public:
  Adam(AdamConfig cfg, const gnn::ParamStore &params);

  /// One update; grads[i] matches params[i] entry for entry.
  void step(gnn::ParamStore &params, std::span<const std::vector<double>> grads);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

struct TrainConfig {
  int epochs = 300;
  data::EpochConfig data;
  AdamConfig optimizer;
  // Splits evaluated after every `eval_every` epochs and after the last one.
  std::vector<data::SplitTag> eval_splits { data::SplitTag::kVal };
  int eval_every = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;  // mean weighted total over batches
  std::size_t batches = 0;
  std::map<std::string, double> task_loss;  // mean over batches where defined
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::vector<mt::MetricReport> reports;
};

using EpochCallback =
    std::function<void(const EpochRecord &, std::span<const mt::MetricReport>)>;

/// Per-task predictions and labels over the molecules a split labels for
/// that task, rows in ascending molecule order (atoms in canonical order for
/// node tasks). Predictions follow the head layout of evaluate_task.
struct SplitPredictions {
  std::vector<Matrix> preds;
  std::vector<Matrix> labels;
};

SplitPredictions predict(const gnn::Model &model, const data::JointDataset &ds,
                         data::SplitTag split, const data::PackCapacity &cap);

/// Metrics of every task whose dataset tags at least one molecule with
/// `split`.
mt::MetricReport evaluate(const gnn::Model &model, const data::JointDataset &ds,
                          data::SplitTag split, const data::PackCapacity &cap,
                          int epoch);

/// One optimizer step on a batch. Returns the weighted total loss and, per
/// task, the loss when defined. Throws NumericError on a non-finite loss or
/// gradient.
double train_step(gnn::Model &model, Adam &adam, const data::JointDataset &ds,
                  const data::PackedBatch &batch,
                  std::map<std::string, double> *task_losses = nullptr);

/// Runs cfg.epochs epochs over the train split.
TrainResult fit(gnn::Model &model, const data::JointDataset &ds,
                const TrainConfig &cfg, const EpochCallback &on_epoch = {});

/// Splits tagged on at least one molecule, in enum order.
std::vector<data::SplitTag> present_splits(const data::JointDataset &ds);

}  // namespace molmix::train
