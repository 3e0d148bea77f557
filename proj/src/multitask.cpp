// SPDX-License-Identifier: Apache-2.0

#include "molmix/multitask.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "molmix/error.hpp"

namespace molmix::mt {
namespace {

using V = ad::Var<double>;

V clamped_log(const V &x) {
  return ad::unary_map<double>(
      x, [](double v) { return std::log(std::max(v, kLogEps)); },
      [](double v) { return 1.0 / std::max(v, kLogEps); });
}

struct Filled {
  std::vector<double> values;  // NaN replaced by 0
  std::vector<double> weights;
  std::size_t missing = 0;
};

Filled fill(const MaskedTargets &t) {
  Filled f;
  f.values.resize(t.total());
  f.weights.resize(t.total());
  for (std::size_t i = 0; i < t.total(); ++i) {
    const bool ok = t.present(i);
    f.values[i] = ok ? t.values.data[i] : 0.0;
    f.weights[i] = ok ? 1.0 : 0.0;
    f.missing += ok ? 0 : 1;
  }
  return f;
}

V scaled_masked_mean(const V &per_element, const Filled &f) {
  ad::Tape<double> &tape = *per_element.tape();
  const V w = tape.constant(per_element.shape(), f.weights);
  const double total = static_cast<double>(f.weights.size());
  const double present = total - static_cast<double>(f.missing);
  return ad::scale(ad::reduce_mean(ad::mul(per_element, w)), total / present);
}

struct Pairs {
  std::vector<double> p;
  std::vector<double> y;
};

Pairs present_pairs(std::span<const double> preds,
                    std::span<const double> labels) {
  if (preds.size() != labels.size()) {
    throw ShapeError("metric: " + std::to_string(preds.size())
                     + " predictions for " + std::to_string(labels.size())
                     + " labels");
  }
  Pairs out;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!std::isnan(preds[i]) && !std::isnan(labels[i])) {
      out.p.push_back(preds[i]);
      out.y.push_back(labels[i]);
    }
  }
  return out;
}

std::vector<double> column(const Matrix &m, std::size_t c) {
  std::vector<double> out(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    out[r] = m(r, c);
  }
  return out;
}

void record(TaskMetrics &tm, const std::string &label, const std::string &metric,
            std::optional<double> value, std::map<std::string, int> &counts) {
  if (!value) {
    ++tm.skipped[metric];
    return;
  }
  tm.per_label.push_back({ label, metric, *value });
  tm.averages[metric] += *value;
  ++counts[metric];
}

}  // namespace

std::size_t MaskedTargets::missing() const {
  return static_cast<std::size_t>(
      std::count_if(values.data.begin(), values.data.end(),
                    [](double v) { return std::isnan(v); }));
}

bool MaskedTargets::present(std::size_t i) const {
  return !std::isnan(values.data[i]);
}

std::optional<V> masked_loss(const V &pred, const MaskedTargets &targets,
                             LossKind kind) {
  const ad::Shape s = pred.shape();
  if (s.rows != targets.values.rows || s.cols != targets.values.cols) {
    throw ShapeError("masked_loss: prediction " + ad::to_string(s)
                     + " vs targets [" + std::to_string(targets.values.rows)
                     + " x " + std::to_string(targets.values.cols) + "]");
  }
  const Filled f = fill(targets);
  if (f.missing == f.values.size()) {
    return std::nullopt;
  }
  ad::Tape<double> &tape = *pred.tape();
  const V y = tape.constant(s, f.values);
  V per_element;
  switch (kind) {
  case LossKind::kMae:
    per_element = ad::abs(ad::sub(pred, y));
    break;
  case LossKind::kBce: {
    std::vector<double> one_minus(f.values.size());
    for (std::size_t i = 0; i < one_minus.size(); ++i) {
      one_minus[i] = 1.0 - f.values[i];
    }
    const V ny = tape.constant(s, std::move(one_minus));
    const V q = ad::add(ad::scale(pred, -1.0), tape.scalar(1.0));
    per_element = ad::scale(
        ad::add(ad::mul(y, clamped_log(pred)), ad::mul(ny, clamped_log(q))),
        -1.0);
    break;
  }
  case LossKind::kHybrid:
    throw ConfigError("masked_loss: use masked_hybrid_loss for hybrid tasks");
  }
  return scaled_masked_mean(per_element, f);
}

void HybridLossConfig::validate() const {
  if (num_classes < 2) {
    throw ConfigError("hybrid loss needs at least 2 classes");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("hybrid loss alpha must lie in [0, 1]");
  }
}

double hybrid_loss(std::span<const double> probs, int y,
                   const HybridLossConfig &cfg) {
  cfg.validate();
  if (probs.size() != static_cast<std::size_t>(cfg.num_classes)) {
    throw ShapeError("hybrid_loss: " + std::to_string(probs.size())
                     + " probabilities for " + std::to_string(cfg.num_classes)
                     + " classes");
  }
  if (y < 0 || y >= cfg.num_classes) {
    throw DataError("hybrid_loss: class " + std::to_string(y) + " out of range");
  }
  double expected = 0.0;
  for (int i = 0; i < cfg.num_classes; ++i) {
    expected += probs[i] * i;
  }
  const double ce = -std::log(std::max(probs[y], kLogEps));
  const double d = expected - y;
  return cfg.alpha * ce + (1.0 - cfg.alpha) * d * d;
}

std::optional<V> masked_hybrid_loss(const V &probs, const MaskedTargets &classes,
                                    const HybridLossConfig &cfg) {
  cfg.validate();
  const ad::Shape s = probs.shape();
  const auto c = static_cast<std::size_t>(cfg.num_classes);
  if (s.cols != c || classes.values.rows != s.rows || classes.values.cols != 1) {
    throw ShapeError("masked_hybrid_loss: probabilities " + ad::to_string(s)
                     + " vs " + std::to_string(classes.values.rows)
                     + " class targets, C = " + std::to_string(c));
  }
  const Filled f = fill(classes);
  if (f.missing == f.values.size()) {
    return std::nullopt;
  }
  std::vector<double> onehot(s.size(), 0.0);
  for (std::size_t r = 0; r < s.rows; ++r) {
    if (f.weights[r] == 0.0) {
      continue;
    }
    const double y = f.values[r];
    if (y < 0.0 || y >= static_cast<double>(c) || y != std::floor(y)) {
      throw DataError("hybrid target " + std::to_string(y)
                      + " is not a class index in [0, "
                      + std::to_string(c) + ")");
    }
    onehot[r * c + static_cast<std::size_t>(y)] = 1.0;
  }
  std::vector<double> idx(c);
  std::iota(idx.begin(), idx.end(), 0.0);

  ad::Tape<double> &tape = *probs.tape();
  const V px = ad::reduce_sum(ad::mul(probs, tape.constant(s, onehot)), 1);
  const V ce = ad::scale(clamped_log(px), -1.0);
  const V expected = ad::matmul(probs, tape.constant({ c, 1 }, idx));
  const V mse = ad::square(ad::sub(expected, tape.constant({ s.rows, 1 },
                                                           f.values)));
  const V per_row = ad::add(ad::scale(ce, cfg.alpha),
                            ad::scale(mse, 1.0 - cfg.alpha));
  return scaled_masked_mean(per_row, f);
}

std::optional<V> task_loss(const TaskSpec &task, const V &pred,
                           const Matrix &targets) {
  const std::size_t rows = pred.shape().rows;
  const std::size_t nl = task.labels.size();
  if (targets.rows != rows || targets.cols != nl
      || pred.shape().cols != static_cast<std::size_t>(task.output_dim())) {
    throw ShapeError("task_loss '" + task.name + "': prediction "
                     + ad::to_string(pred.shape()) + " vs targets ["
                     + std::to_string(targets.rows) + " x "
                     + std::to_string(targets.cols) + "]");
  }
  if (task.loss != LossKind::kHybrid) {
    return masked_loss(pred, { targets }, task.loss);
  }
  const auto c = static_cast<std::size_t>(task.num_classes);
  MaskedTargets classes { Matrix(rows * nl, 1) };
  classes.values.data = targets.data;
  return masked_hybrid_loss(ad::reshape(pred, { rows * nl, c }), classes,
                            { task.num_classes, task.alpha });
}

V total_loss(ad::Tape<double> &tape, std::span<const std::optional<V>> losses,
             std::span<const double> weights) {
  if (!weights.empty() && weights.size() != losses.size()) {
    throw ShapeError("total_loss: " + std::to_string(weights.size())
                     + " weights for " + std::to_string(losses.size())
                     + " losses");
  }
  std::optional<V> sum;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!losses[i]) {
      continue;
    }
    const double w = weights.empty() ? 1.0 : weights[i];
    const V term = w == 1.0 ? *losses[i] : ad::scale(*losses[i], w);
    sum = sum ? ad::add(*sum, term) : term;
  }
  return sum ? *sum : tape.scalar(0.0);
}

// ---- Metrics -------------------------------------------------------------

std::optional<double> metric_auroc(std::span<const double> preds,
                                   std::span<const double> labels) {
  const Pairs d = present_pairs(preds, labels);
  const std::size_t n = d.p.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return d.p[a] < d.p[b]; });
  // Mid-ranks (1-based) over tie groups.
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && d.p[order[j + 1]] == d.p[order[i]]) {
      ++j;
    }
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      rank[order[k]] = mid;
    }
    i = j + 1;
  }
  double pos = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d.y[i] > 0.5) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) {
    return std::nullopt;
  }
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

std::optional<double> metric_ap(std::span<const double> preds,
                                std::span<const double> labels) {
  const Pairs d = present_pairs(preds, labels);
  const std::size_t n = d.p.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return d.p[a] > d.p[b]; });
  double pos_total = 0.0;
  for (double y: d.y) {
    pos_total += y > 0.5 ? 1.0 : 0.0;
  }
  if (pos_total == 0.0 || pos_total == static_cast<double>(n)) {
    return std::nullopt;
  }
  double tp = 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (d.y[order[k]] > 0.5) {
      tp += 1.0;
      sum += tp / static_cast<double>(k + 1);
    }
  }
  return sum / pos_total;
}

std::optional<double> metric_pearson(std::span<const double> preds,
                                     std::span<const double> labels) {
  const Pairs d = present_pairs(preds, labels);
  const std::size_t n = d.p.size();
  if (n < 2) {
    return std::nullopt;
  }
  const double mp = std::accumulate(d.p.begin(), d.p.end(), 0.0) / n;
  const double my = std::accumulate(d.y.begin(), d.y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = d.p[i] - mp;
    const double b = d.y[i] - my;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0.0 || syy == 0.0) {
    return std::nullopt;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> metric_r2(std::span<const double> preds,
                                std::span<const double> labels) {
  const Pairs d = present_pairs(preds, labels);
  const std::size_t n = d.p.size();
  if (n < 2) {
    return std::nullopt;
  }
  const double my = std::accumulate(d.y.begin(), d.y.end(), 0.0) / n;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ss_res += (d.y[i] - d.p[i]) * (d.y[i] - d.p[i]);
    ss_tot += (d.y[i] - my) * (d.y[i] - my);
  }
  if (ss_tot == 0.0) {
    return std::nullopt;
  }
  return 1.0 - ss_res / ss_tot;
}

std::optional<double> metric_mae(std::span<const double> preds,
                                 std::span<const double> labels) {
  const Pairs d = present_pairs(preds, labels);
  if (d.p.empty()) {
    return std::nullopt;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < d.p.size(); ++i) {
    s += std::abs(d.p[i] - d.y[i]);
  }
  return s / static_cast<double>(d.p.size());
}

std::vector<double> bin_zscores(std::span<const double> values,
                                std::span<const double> thresholds) {
  if (thresholds.empty()) {
    thresholds = kDefaultZThresholds;
  }
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i - 1] < thresholds[i])) {
      throw ConfigError("z-score thresholds must be strictly increasing");
    }
  }
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (std::isnan(v)) {
      out[i] = v;
      continue;
    }
    out[i] = static_cast<double>(
        std::count_if(thresholds.begin(), thresholds.end(),
                      [v](double t) { return t < v; }));
  }
  return out;
}

std::optional<double> metric_accuracy(std::span<const double> preds,
                                      std::span<const double> labels,
                                      double threshold) {
  const Pairs d = present_pairs(preds, labels);
  if (d.p.empty()) {
    return std::nullopt;
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < d.p.size(); ++i) {
    hit += ((d.p[i] >= threshold) == (d.y[i] >= 0.5)) ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(d.p.size());
}

TaskMetrics evaluate_task(const TaskSpec &task, const Matrix &preds,
                          const Matrix &labels) {
  const std::size_t nl = task.labels.size();
  if (labels.cols != nl || preds.rows != labels.rows
      || preds.cols != static_cast<std::size_t>(task.output_dim())) {
    throw ShapeError("evaluate_task '" + task.name + "': prediction/label shape");
  }
  TaskMetrics tm;
  tm.task = task.name;
  std::map<std::string, int> counts;
  for (std::size_t j = 0; j < nl; ++j) {
    const auto &name = task.labels[j];
    const auto y = column(labels, j);
    switch (task.loss) {
    case LossKind::kMae: {
      const auto p = column(preds, j);
      record(tm, name, "mae", metric_mae(p, y), counts);
      record(tm, name, "pearson", metric_pearson(p, y), counts);
      record(tm, name, "r2", metric_r2(p, y), counts);
      break;
    }
    case LossKind::kBce: {
      const auto p = column(preds, j);
      record(tm, name, "auroc", metric_auroc(p, y), counts);
      record(tm, name, "ap", metric_ap(p, y), counts);
      record(tm, name, "accuracy", metric_accuracy(p, y), counts);
      break;
    }
    case LossKind::kHybrid: {
      const auto c = static_cast<std::size_t>(task.num_classes);
      std::size_t seen = 0, hit = 0;
      for (std::size_t r = 0; r < preds.rows; ++r) {
        if (std::isnan(y[r])) {
          continue;
        }
        const auto row = preds.row(r).subspan(j * c, c);
        const auto arg = static_cast<std::size_t>(
            std::max_element(row.begin(), row.end()) - row.begin());
        ++seen;
        hit += static_cast<double>(arg) == y[r] ? 1 : 0;
      }
      record(tm, name, "accuracy",
             seen == 0 ? std::nullopt
                       : std::optional<double>(static_cast<double>(hit)
                                               / static_cast<double>(seen)),
             counts);
      for (std::size_t k = 0; k < c; ++k) {
        const auto p = column(preds, j * c + k);
        std::vector<double> bin(y.size());
        for (std::size_t r = 0; r < y.size(); ++r) {
          bin[r] = std::isnan(y[r]) ? y[r]
                                    : (y[r] == static_cast<double>(k) ? 1.0 : 0.0);
        }
        const std::string suffix = "_c" + std::to_string(k);
        record(tm, name, "auroc" + suffix, metric_auroc(p, bin), counts);
        record(tm, name, "ap" + suffix, metric_ap(p, bin), counts);
      }
      break;
    }
    }
  }
  for (auto &[metric, sum]: tm.averages) {
    sum /= static_cast<double>(counts[metric]);
  }
  return tm;
}

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string to_csv(std::span<const MetricReport> reports) {
  std::string out = "epoch,split,task,label,metric,value\n";
  for (const auto &r: reports) {
    const std::string prefix = std::to_string(r.epoch) + "," + r.split + ",";
    for (const auto &t: r.tasks) {
      for (const auto &m: t.per_label) {
        out += prefix + t.task + "," + m.label + "," + m.metric + ","
               + num(m.value) + "\n";
      }
      for (const auto &[metric, value]: t.averages) {
        out += prefix + t.task + ",average," + metric + "," + num(value) + "\n";
      }
    }
  }
  return out;
}

std::string to_json(std::span<const MetricReport> reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto &r: reports) {
    nlohmann::ordered_json jr;
    jr["epoch"] = r.epoch;
    jr["split"] = r.split;
    jr["tasks"] = nlohmann::ordered_json::array();
    for (const auto &t: r.tasks) {
      nlohmann::ordered_json jt;
      jt["task"] = t.task;
      jt["per_label"] = nlohmann::ordered_json::array();
      for (const auto &m: t.per_label) {
        jt["per_label"].push_back(
            { { "label", m.label }, { "metric", m.metric }, { "value", m.value } });
      }
      jt["average"] = t.averages;
      jt["skipped"] = t.skipped;
      jr["tasks"].push_back(std::move(jt));
    }
    arr.push_back(std::move(jr));
  }
  return arr.dump(2);
}

}  // namespace molmix::mt
