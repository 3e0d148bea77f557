// SPDX-License-Identifier: Apache-2.0

#include "molmix/train.hpp"

#include <cmath>
#include <limits>
#include <optional>

#include "molmix/error.hpp"

namespace molmix::train {

using gnn::V;

void AdamConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw ConfigError("optimizer: lr must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optimizer: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) {
    throw ConfigError("optimizer: eps must be positive");
  }
  if (!(weight_decay >= 0.0)) {
    throw ConfigError("optimizer: weight_decay must be non-negative");
  }
}

Adam::Adam(AdamConfig cfg, const gnn::ParamStore &params): cfg_(cfg) {
  cfg_.validate();
  for (const auto &p: params.all()) {
    m_.emplace_back(p.value.data.size(), 0.0);
    v_.emplace_back(p.value.data.size(), 0.0);
  }
}

void Adam::step(gnn::ParamStore &params, std::span<const std::vector<double>> grads) {
  if (grads.size() != params.size() || m_.size() != params.size()) {
    throw ShapeError("Adam::step: gradient count differs from parameters");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto &x = params[i].value.data;
    const auto &g = grads[i];
    if (g.size() != x.size()) {
      throw ShapeError("Adam::step: gradient shape of '" + params[i].name + "'");
    }
    auto &m = m_[i];
    auto &v = v_[i];
    for (std::size_t j = 0; j < x.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      x[j] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * x[j]);
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) {
    throw ConfigError("train: epochs must be >= 1");
  }
  if (eval_every < 0) {
    throw ConfigError("train: eval_every must be >= 0");
  }
  data.cap.validate();
  optimizer.validate();
}

namespace {

// Head index of every dataset task.
std::vector<std::size_t> head_map(const gnn::Model &model,
                                  const data::JointDataset &ds) {
  const auto &heads = model.config().heads;
  std::vector<std::size_t> out;
  for (const auto &t: ds.tasks) {
    std::optional<std::size_t> found;
    for (std::size_t h = 0; h < heads.size(); ++h) {
      if (heads[h].task == t.spec.name) {
        found = h;
      }
    }
    if (!found) {
      throw ConfigError("no model head for task '" + t.spec.name + "'");
    }
    const auto &h = heads[*found];
    if (h.level != t.spec.level || h.loss != t.spec.loss
        || h.output_dim() != t.spec.output_dim()) {
      throw ConfigError("model head '" + h.task + "' does not match its task");
    }
    out.push_back(*found);
  }
  for (const auto &h: heads) {
    bool declared = false;
    for (const auto &t: ds.tasks) {
      declared = declared || t.spec.name == h.task;
    }
    if (!declared) {
      throw ConfigError("model head '" + h.task + "' references no task");
    }
  }
  return out;
}

data::EpochConfig eval_config(const data::PackCapacity &cap) {
  data::EpochConfig c;
  c.cap = cap;
  c.shuffle = false;
  c.oversize = data::OversizePolicy::kError;
  return c;
}

}  // namespace

std::vector<data::SplitTag> present_splits(const data::JointDataset &ds) {
  std::vector<data::SplitTag> out;
  for (auto tag: { data::SplitTag::kTrain, data::SplitTag::kVal,
                   data::SplitTag::kTest, data::SplitTag::kTestSeen }) {
    if (!ds.molecules(tag).empty()) {
      out.push_back(tag);
    }
  }
  return out;
}

SplitPredictions predict(const gnn::Model &model, const data::JointDataset &ds,
                         data::SplitTag split, const data::PackCapacity &cap) {
  const auto heads = head_map(model, ds);
  const std::size_t nt = ds.tasks.size();
  // Per task and molecule: prediction rows and label rows.
  std::vector<std::vector<std::vector<double>>> pred_rows(nt), label_rows(nt);
  for (auto &v: pred_rows) {
    v.resize(ds.size());
  }
  for (auto &v: label_rows) {
    v.resize(ds.size());
  }
  std::vector<std::size_t> task_dataset(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    task_dataset[t] = ds.dataset_index(ds.tasks[t].spec.dataset);
  }

  for (const auto &pack: data::plan_epoch(ds, split, eval_config(cap), 0)) {
    const auto batch = data::make_batch(ds, pack, split, cap);
    gnn::Tape tape;
    const auto p = model.params().leaves(tape, false);
    const auto out = model.forward(tape, p, batch);
    std::size_t node_offset = 0;
    for (std::size_t g = 0; g < batch.num_graphs; ++g) {
      const std::size_t m = batch.molecules[g];
      const auto atoms = static_cast<std::size_t>(ds.num_atoms[m]);
      for (std::size_t t = 0; t < nt; ++t) {
        if (ds.tags[task_dataset[t]][m] != split) {
          continue;
        }
        const V &y = out.heads[heads[t]];
        const std::size_t width = y.shape().cols;
        const Matrix &target = batch.targets[t];
        const bool graph = ds.tasks[t].spec.level == Level::kGraph;
        const std::size_t first = graph ? g : node_offset;
        const std::size_t count = graph ? 1 : atoms;
        auto &pr = pred_rows[t][m];
        auto &lr = label_rows[t][m];
        for (std::size_t r = first; r < first + count; ++r) {
          pr.insert(pr.end(), y.value().begin() + static_cast<std::ptrdiff_t>(r * width),
                    y.value().begin() + static_cast<std::ptrdiff_t>((r + 1) * width));
          const auto row = target.row(r);
          lr.insert(lr.end(), row.begin(), row.end());
        }
      }
      node_offset += atoms;
    }
  }

  SplitPredictions sp;
  for (std::size_t t = 0; t < nt; ++t) {
    const auto width = static_cast<std::size_t>(ds.tasks[t].spec.output_dim());
    const auto labels = ds.tasks[t].spec.labels.size();
    std::vector<double> pv, lv;
    for (std::size_t m = 0; m < ds.size(); ++m) {
      pv.insert(pv.end(), pred_rows[t][m].begin(), pred_rows[t][m].end());
      lv.insert(lv.end(), label_rows[t][m].begin(), label_rows[t][m].end());
    }
    Matrix pm(pv.size() / width, width), lm(lv.size() / labels, labels);
    pm.data = std::move(pv);
    lm.data = std::move(lv);
    sp.preds.push_back(std::move(pm));
    sp.labels.push_back(std::move(lm));
  }
  return sp;
}

mt::MetricReport evaluate(const gnn::Model &model, const data::JointDataset &ds,
                          data::SplitTag split, const data::PackCapacity &cap,
                          int epoch) {
  const auto sp = predict(model, ds, split, cap);
  mt::MetricReport report;
  report.epoch = epoch;
  report.split = data::to_string(split);
  for (std::size_t t = 0; t < ds.tasks.size(); ++t) {
    if (ds.molecules(split, ds.dataset_index(ds.tasks[t].spec.dataset)).empty()) {
      continue;
    }
    report.tasks.push_back(mt::evaluate_task(ds.tasks[t].spec, sp.preds[t],
                                             sp.labels[t]));
  }
  return report;
}

double train_step(gnn::Model &model, Adam &adam, const data::JointDataset &ds,
                  const data::PackedBatch &batch,
                  std::map<std::string, double> *task_losses) {
  const auto heads = head_map(model, ds);
  gnn::Tape tape;
  const auto p = model.params().leaves(tape, true);
  const auto out = model.forward(tape, p, batch);
  std::vector<std::optional<V>> losses;
  std::vector<double> weights;
  for (std::size_t t = 0; t < ds.tasks.size(); ++t) {
    losses.push_back(
        mt::task_loss(ds.tasks[t].spec, out.heads[heads[t]], batch.targets[t]));
    weights.push_back(ds.tasks[t].spec.weight);
  }
  const V total = mt::total_loss(tape, losses, weights);
  const double value = total.item();
  if (!std::isfinite(value)) {
    std::string detail;
    for (std::size_t t = 0; t < losses.size(); ++t) {
      if (losses[t]) {
        detail += " " + ds.tasks[t].spec.name + "=" + std::to_string(losses[t]->item());
      }
    }
    throw NumericError("non-finite training loss after " + std::to_string(adam.steps())
                       + " steps:" + detail);
  }
  if (task_losses != nullptr) {
    task_losses->clear();
    for (std::size_t t = 0; t < losses.size(); ++t) {
      if (losses[t]) {
        (*task_losses)[ds.tasks[t].spec.name] = losses[t]->item();
      }
    }
  }
  if (!total.requires_grad()) {
    return value;  // nothing labeled in this batch
  }
  tape.backward(total);
  std::vector<std::vector<double>> grads;
  grads.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto g = p[i].grad();
    std::vector<double> copy(g.begin(), g.end());
    copy.resize(model.params()[i].value.data.size(), 0.0);
    for (double x: copy) {
      if (!std::isfinite(x)) {
        throw NumericError("non-finite gradient for '" + model.params()[i].name + "'");
      }
    }
    grads.push_back(std::move(copy));
  }
  adam.step(model.params(), grads);
  return value;
}

TrainResult fit(gnn::Model &model, const data::JointDataset &ds,
                const TrainConfig &cfg, const EpochCallback &on_epoch) {
  cfg.validate();
  head_map(model, ds);
  Adam adam(cfg.optimizer, model.params());
  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    std::map<std::string, std::pair<double, int>> sums;
    data::EpochIterator it(ds, data::SplitTag::kTrain, cfg.data, epoch);
    while (auto batch = it.next()) {
      std::map<std::string, double> tl;
      rec.loss += train_step(model, adam, ds, *batch, &tl);
      ++rec.batches;
      for (const auto &[name, v]: tl) {
        sums[name].first += v;
        sums[name].second += 1;
      }
    }
    if (rec.batches > 0) {
      rec.loss /= static_cast<double>(rec.batches);
    }
    for (const auto &[name, s]: sums) {
      rec.task_loss[name] = s.first / s.second;
    }
    const bool last = epoch + 1 == cfg.epochs;
    const bool due = last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0);
    const std::size_t before = result.reports.size();
    if (due) {
      for (auto split: cfg.eval_splits) {
        if (!ds.molecules(split).empty()) {
          result.reports.push_back(evaluate(model, ds, split, cfg.data.cap, epoch));
        }
      }
    }
    result.epochs.push_back(rec);
    if (on_epoch) {
      on_epoch(rec, std::span(result.reports).subspan(before));
    }
  }
  return result;
}

}  // namespace molmix::train
