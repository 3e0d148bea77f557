// SPDX-License-Identifier: Apache-2.0

#include "molmix/task.hpp"

#include "molmix/error.hpp"

namespace molmix {

Level parse_level(const std::string &name) {
  if (name == "graph") {
    return Level::kGraph;
  }
  if (name == "node") {
    return Level::kNode;
  }
  throw ConfigError("unknown level '" + name + "' (expected graph or node)");
}

std::string to_string(Level level) {
  return level == Level::kGraph ? "graph" : "node";
}

LossKind parse_loss_kind(const std::string &name) {
  if (name == "mae") {
    return LossKind::kMae;
  }
  if (name == "bce") {
    return LossKind::kBce;
  }
  if (name == "hybrid") {
    return LossKind::kHybrid;
  }
  throw ConfigError("unknown loss '" + name + "' (expected mae, bce, hybrid)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
  case LossKind::kMae: return "mae";
  case LossKind::kBce: return "bce";
  case LossKind::kHybrid: return "hybrid";
  }
  return "mae";
}

int TaskSpec::output_dim() const {
  const int n = static_cast<int>(labels.size());
  return loss == LossKind::kHybrid ? n * num_classes : n;
}

void TaskSpec::validate() const {
  if (name.empty()) {
    throw ConfigError("task without a name");
  }
  if (labels.empty()) {
    throw ConfigError("task '" + name + "' has no label columns");
  }
  if (loss == LossKind::kHybrid) {
    if (num_classes < 2) {
      throw ConfigError("task '" + name + "': hybrid loss needs num_classes >= 2");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw ConfigError("task '" + name + "': alpha must lie in [0, 1]");
    }
    if (!bin_thresholds.empty()
        && bin_thresholds.size() + 1 != static_cast<std::size_t>(num_classes)) {
      throw ConfigError("task '" + name
                        + "': bin thresholds must number num_classes - 1");
    }
  } else if (!bin_thresholds.empty()) {
    throw ConfigError("task '" + name + "': bin thresholds need a hybrid loss");
  }
  if (norm != feat::NormKind::kNone && loss != LossKind::kMae) {
    throw ConfigError("task '" + name
                      + "': normalization only applies to regression tasks");
  }
  if (!(weight >= 0.0)) {
    throw ConfigError("task '" + name + "': weight must be >= 0");
  }
}

}  // namespace molmix
