// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "molmix/featurize.hpp"

namespace molmix {

enum class Level {
  kGraph,
  kNode,
};

// mae: regression; bce: binary classification; hybrid: ranked
// classification with num_classes ordered classes per label.
enum class LossKind {
  kMae,
  kBce,
  kHybrid,
};

Level parse_level(const std::string &name);
std::string to_string(Level level);
LossKind parse_loss_kind(const std::string &name);
std::string to_string(LossKind kind);

/// A group of label columns from one dataset trained with one loss.
struct TaskSpec {
  std::string name;
  std::string dataset;
  Level level = Level::kGraph;
  LossKind loss = LossKind::kMae;
  std::vector<std::string> labels;
  int num_classes = 0;  // hybrid only
  double alpha = 0.5;   // hybrid CE weight
  // Hybrid only: raw values are binned at these cut points (z-scores).
  // Empty means the column already holds class indices.
  std::vector<double> bin_thresholds;
  feat::NormKind norm = feat::NormKind::kNone;  // mae only
  double weight = 1.0;

  // Width of the prediction head.
  int output_dim() const;
  void validate() const;
};

}  // namespace molmix
