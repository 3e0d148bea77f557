// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "molmix/matrix.hpp"
#include "molmix/task.hpp"
#include "molmix/tensor.hpp"

namespace molmix::mt {

// Lower clamp for log arguments inside the CE / BCE losses.
inline constexpr double kLogEps = 1e-12;

/// Targets of one task for a batch. NaN marks a missing entry.
struct MaskedTargets {
  Matrix values;

  std::size_t total() const { return values.data.size(); }
  std::size_t missing() const;
  bool present(std::size_t i) const;
};

/// Mean over all entries with missing ones weighted 0, times
/// total / (total - missing). Returns nullopt when every entry is missing.
/// For bce, `pred` holds probabilities.
std::optional<ad::Var<double>> masked_loss(const ad::Var<double> &pred,
                                           const MaskedTargets &targets,
                                           LossKind kind);

struct HybridLossConfig {
  int num_classes = 5;
  double alpha = 0.5;

  void validate() const;
};

/// alpha * -log(x_y) + (1 - alpha) * (sum_i x_i * i - y)^2 over i in [0, C).
double hybrid_loss(std::span<const double> probs, int y,
                   const HybridLossConfig &cfg);

/// Row-wise hybrid loss for probabilities `probs` [rows x C] against class
/// indices `classes` [rows x 1] (NaN = missing), masked and scaled like
/// masked_loss.
std::optional<ad::Var<double>> masked_hybrid_loss(const ad::Var<double> &probs,
                                                  const MaskedTargets &classes,
                                                  const HybridLossConfig &cfg);

/// Weighted sum; nullopt entries (skipped tasks) contribute nothing. Returns a
/// zero constant on `tape` when nothing contributes.
ad::Var<double> total_loss(ad::Tape<double> &tape,
                           std::span<const std::optional<ad::Var<double>>> losses,
                           std::span<const double> weights);

/// Loss of one task head. `pred` is [rows x output_dim]; `targets` holds
/// [rows x labels] values (class indices for hybrid). Hybrid heads are
/// split into one C-way block per label.
std::optional<ad::Var<double>> task_loss(const TaskSpec &task,
                                         const ad::Var<double> &pred,
                                         const Matrix &targets);

// ---- Metrics -------------------------------------------------------------
//
// Every metric drops pairs with a NaN label or prediction first and returns
// nullopt when it is undefined on what remains.

std::optional<double> metric_auroc(std::span<const double> preds,
                                   std::span<const double> labels);
std::optional<double> metric_ap(std::span<const double> preds,
                                std::span<const double> labels);
std::optional<double> metric_pearson(std::span<const double> preds,
                                     std::span<const double> labels);
std::optional<double> metric_r2(std::span<const double> preds,
                                std::span<const double> labels);
std::optional<double> metric_mae(std::span<const double> preds,
                                 std::span<const double> labels);
// Fraction of binary labels matched by (pred >= threshold).
std::optional<double> metric_accuracy(std::span<const double> preds,
                                      std::span<const double> labels,
                                      double threshold = 0.5);

/// Class index = number of thresholds strictly below the value; NaN passes.
std::vector<double> bin_zscores(std::span<const double> values,
                                std::span<const double> thresholds = {});
inline const std::vector<double> kDefaultZThresholds { -4.0, -2.0, 2.0, 4.0 };

struct LabelMetric {
  std::string label;
  std::string metric;
  double value = 0.0;
};

struct TaskMetrics {
  std::string task;
  std::vector<LabelMetric> per_label;
  // Mean over labels where the metric is defined.
  std::map<std::string, double> averages;
  // Labels where the metric was undefined, per metric.
  std::map<std::string, int> skipped;
};

/// Metrics of one task. `preds` follows the head layout: [rows x labels] for
/// mae/bce (bce as probabilities) and [rows x labels*C] probabilities for
/// hybrid. `labels` is [rows x labels], NaN for missing.
///   mae    -> mae, pearson, r2
///   bce    -> auroc, ap, accuracy at 0.5
///   hybrid -> accuracy, plus one-vs-rest auroc/ap per class ("auroc_c2")
TaskMetrics evaluate_task(const TaskSpec &task, const Matrix &preds,
                          const Matrix &labels);

struct MetricReport {
  int epoch = 0;
  std::string split;
  std::vector<TaskMetrics> tasks;
};

// One row per (epoch, split, task, label, metric); averages use the label
// "average".
std::string to_csv(std::span<const MetricReport> reports);
std::string to_json(std::span<const MetricReport> reports);

}  // namespace molmix::mt
