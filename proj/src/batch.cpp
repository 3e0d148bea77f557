// SPDX-License-Identifier: Apache-2.0

#include "molmix/batch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

#include "molmix/error.hpp"
#include "molmix/multitask.hpp"

namespace molmix::data {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::size_t column_of(const std::vector<std::string> &cols,
                      const std::string &name, const TaskSpec &t) {
  const auto it = std::find(cols.begin(), cols.end(), name);
  if (it == cols.end()) {
    throw ConfigError("task '" + t.name + "': dataset '" + t.dataset
                      + "' has no " + to_string(t.level) + "-level column '"
                      + name + "'");
  }
  return static_cast<std::size_t>(it - cols.begin());
}

void check_classes(const TaskSpec &t, double v) {
  if (std::isnan(v)) {
    return;
  }
  if (v < 0.0 || v >= t.num_classes || v != std::floor(v)) {
    throw DataError("task '" + t.name + "': value " + std::to_string(v)
                    + " is not a class index in [0, "
                    + std::to_string(t.num_classes) + ")");
  }
}

void check_binary(const TaskSpec &t, double v) {
  if (!std::isnan(v) && v != 0.0 && v != 1.0) {
    throw DataError("task '" + t.name + "': binary label "
                    + std::to_string(v) + " is not 0 or 1");
  }
}

// Bins, validates and normalizes the raw values of one label in place.
// `train_values` are the entries used to fit the normalization.
feat::NormParams prepare_label(const TaskSpec &t, const std::string &label,
                               std::vector<double *> &cells,
                               const std::vector<double *> &train_cells) {
  if (t.loss == LossKind::kHybrid && !t.bin_thresholds.empty()) {
    for (double *c: cells) {
      const double v = *c;
      *c = mt::bin_zscores(std::span<const double>(&v, 1), t.bin_thresholds)[0];
    }
  }
  for (double *c: cells) {
    if (std::isinf(*c)) {
      throw DataError("task '" + t.name + "': infinite label value");
    }
    if (t.loss == LossKind::kHybrid) {
      check_classes(t, *c);
    } else if (t.loss == LossKind::kBce) {
      check_binary(t, *c);
    }
  }
  feat::NormParams p;
  p.name = label;
  if (t.loss == LossKind::kMae && t.norm != feat::NormKind::kNone) {
    std::vector<double> fit;
    fit.reserve(train_cells.size());
    for (const double *c: train_cells) {
      fit.push_back(*c);
    }
    p = feat::fit_norm_column(label, fit, t.norm);
    for (double *c: cells) {
      if (!std::isnan(*c)) {
        *c = feat::apply_norm(*c, p);
      }
    }
  }
  return p;
}

}  // namespace

std::vector<std::size_t> JointDataset::molecules(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < size(); ++m) {
    for (const auto &t: tags) {
      if (t[m] == tag) {
        out.push_back(m);
        break;
      }
    }
  }
  return out;
}

std::vector<std::size_t> JointDataset::molecules(SplitTag tag,
                                                 std::size_t d) const {
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < size(); ++m) {
    if (tags.at(d)[m] == tag) {
      out.push_back(m);
    }
  }
  return out;
}

std::size_t JointDataset::dataset_index(const std::string &name) const {
  const auto it = std::find(datasets.begin(), datasets.end(), name);
  if (it == datasets.end()) {
    throw ConfigError("unknown dataset '" + name + "'");
  }
  return static_cast<std::size_t>(it - datasets.begin());
}

std::vector<feat::NormParams> JointDataset::all_norms() const {
  std::vector<feat::NormParams> out;
  for (const auto &t: tasks) {
    for (const auto &p: t.norms) {
      auto q = p;
      q.name = t.spec.name + "/" + p.name;
      out.push_back(q);
    }
  }
  return out;
}

JointDataset build_joint(std::span<const LabelTable *const> tables,
                         const std::map<std::string, SplitAssignment> &splits,
                         std::span<const TaskSpec> tasks) {
  JointDataset ds;
  std::unordered_map<std::string, std::size_t> index;
  // row_of[d][m]: row of molecule m in table d.
  std::vector<std::vector<std::optional<std::size_t>>> row_of;

  for (const auto *t: tables) {
    if (std::find(ds.datasets.begin(), ds.datasets.end(), t->dataset)
        != ds.datasets.end()) {
      throw ConfigError("dataset '" + t->dataset + "' listed twice");
    }
    const auto sit = splits.find(t->dataset);
    if (sit == splits.end() || sit->second.tags.size() != t->size()) {
      throw ConfigError("no split matching dataset '" + t->dataset + "'");
    }
    ds.datasets.push_back(t->dataset);
    for (std::size_t r = 0; r < t->size(); ++r) {
      const auto [it, fresh] = index.emplace(t->keys[r], ds.keys.size());
      if (fresh) {
        ds.keys.push_back(t->keys[r]);
        ds.smiles.push_back(t->smiles[r]);
        ds.num_atoms.push_back(t->num_atoms[r]);
      }
    }
  }
  const std::size_t n = ds.size();
  ds.tags.assign(tables.size(), std::vector<std::optional<SplitTag>>(n));
  row_of.assign(tables.size(), std::vector<std::optional<std::size_t>>(n));
  for (std::size_t d = 0; d < tables.size(); ++d) {
    const auto &split = splits.at(tables[d]->dataset);
    for (std::size_t r = 0; r < tables[d]->size(); ++r) {
      const std::size_t m = index.at(tables[d]->keys[r]);
      ds.tags[d][m] = split.tags[r];
      row_of[d][m] = r;
    }
  }

  for (const auto &spec: tasks) {
    spec.validate();
    for (const auto &other: ds.tasks) {
      if (other.spec.name == spec.name) {
        throw ConfigError("task '" + spec.name + "' defined twice");
      }
    }
    TaskData td;
    td.spec = spec;
    td.dataset = ds.dataset_index(spec.dataset);
    const LabelTable &table = *tables[td.dataset];
    const std::size_t nl = spec.labels.size();
    const auto &rows = row_of[td.dataset];
    const auto &tags = ds.tags[td.dataset];

    if (spec.level == Level::kGraph) {
      td.graph = Matrix(n, nl, kNan);
    } else {
      td.node.resize(n);
    }
    for (std::size_t j = 0; j < nl; ++j) {
      const auto &label = spec.labels[j];
      std::vector<double *> cells, train_cells;
      if (spec.level == Level::kGraph) {
        const std::size_t c = column_of(table.graph_columns, label, spec);
        for (std::size_t m = 0; m < n; ++m) {
          if (!rows[m]) {
            continue;
          }
          td.graph(m, j) = table.graph(*rows[m], c);
          cells.push_back(&td.graph(m, j));
          if (tags[m] == SplitTag::kTrain) {
            train_cells.push_back(&td.graph(m, j));
          }
        }
      } else {
        const std::size_t c = column_of(table.node_columns, label, spec);
        for (std::size_t m = 0; m < n; ++m) {
          if (!rows[m]) {
            continue;
          }
          auto &mat = td.node[m];
          if (mat.rows == 0) {
            mat = Matrix(static_cast<std::size_t>(ds.num_atoms[m]), nl, kNan);
          }
          const auto &values = table.node[*rows[m]][c];
          for (std::size_t a = 0; a < values.size() && a < mat.rows; ++a) {
            mat(a, j) = values[a];
            cells.push_back(&mat(a, j));
            if (tags[m] == SplitTag::kTrain) {
              train_cells.push_back(&mat(a, j));
            }
          }
        }
      }
      auto p = prepare_label(spec, label, cells, train_cells);
      if (spec.loss == LossKind::kMae) {
        td.norms.push_back(std::move(p));
      }
    }
    ds.tasks.push_back(std::move(td));
  }
  return ds;
}

void attach_features(JointDataset &ds, const FeatStoreConfig &cfg,
                     const MolCache *cache, FeaturizeStats *stats) {
  ds.features = featurize_all(ds.keys, ds.smiles, cfg, cache, stats);
  for (std::size_t m = 0; m < ds.size(); ++m) {
    if (ds.features[m].num_atoms() != static_cast<std::size_t>(ds.num_atoms[m])) {
      throw DataError("molecule '" + ds.smiles[m]
                      + "': featurized atom count differs from the label table");
    }
  }
}

PackedBatch make_batch(const JointDataset &ds, std::span<const std::size_t> mols,
                       SplitTag split, const PackCapacity &cap) {
  cap.validate();
  if (ds.features.size() != ds.size()) {
    throw ShapeError("make_batch: features not attached");
  }
  if (mols.size() > cap.max_graphs) {
    throw ShapeError("make_batch: more graphs than max_graphs");
  }
  if (ds.tags.size() > 32) {
    throw ConfigError("at most 32 datasets can be mixed");
  }
  const auto &first = ds.features.empty() ? MolFeatures {} : ds.features[0];
  const std::size_t node_dim = first.graph.node_features.cols;
  const std::size_t edge_dim = first.graph.edge_features.cols;
  const std::size_t k = first.pe.lap.eigvecs.cols;
  const std::size_t steps = first.pe.rw.probs.cols;

  PackedBatch b;
  b.cap = cap;
  b.num_graphs = mols.size();
  b.node_features = Matrix(cap.max_nodes, node_dim);
  b.edge_features = Matrix(0, edge_dim);
  b.node_graph.assign(cap.max_nodes, static_cast<int>(cap.max_graphs - 1));
  b.node_mask.assign(cap.max_nodes, 0.0);
  b.graph_mask.assign(cap.max_graphs, 0.0);
  b.graph_nodes.assign(cap.max_graphs, 0.0);
  b.lap_vecs = Matrix(cap.max_nodes, k);
  b.lap_vals = Matrix(cap.max_nodes, k);
  b.rwse = Matrix(cap.max_nodes, steps);
  for (const auto &t: ds.tasks) {
    const std::size_t rows =
        t.spec.level == Level::kGraph ? cap.max_graphs : cap.max_nodes;
    b.targets.emplace_back(rows, t.spec.labels.size(), kNan);
  }

  std::size_t offset = 0;
  for (std::size_t g = 0; g < mols.size(); ++g) {
    const std::size_t m = mols[g];
    const auto &f = ds.features.at(m);
    const std::size_t na = f.num_atoms();
    if (offset + na > cap.max_nodes) {
      throw ShapeError("make_batch: more nodes than max_nodes");
    }
    if (f.graph.node_features.cols != node_dim || f.pe.lap.eigvecs.cols != k
        || f.pe.rw.probs.cols != steps) {
      throw ShapeError("make_batch: inconsistent feature widths");
    }
    b.molecules.push_back(m);
    std::uint32_t bits = 0;
    for (std::size_t d = 0; d < ds.tags.size(); ++d) {
      if (ds.tags[d][m] == split) {
        bits |= 1u << d;
      }
    }
    b.dataset_bits.push_back(bits);
    b.graph_mask[g] = 1.0;
    b.graph_nodes[g] = static_cast<double>(na);

    for (std::size_t a = 0; a < na; ++a) {
      const std::size_t row = offset + a;
      std::copy_n(f.graph.node_features.row(a).begin(), node_dim,
                  b.node_features.row(row).begin());
      std::copy_n(f.pe.lap.eigvecs.row(a).begin(), k, b.lap_vecs.row(row).begin());
      std::copy_n(f.pe.lap.eigvals.begin(), k, b.lap_vals.row(row).begin());
      std::copy_n(f.pe.rw.probs.row(a).begin(), steps, b.rwse.row(row).begin());
      b.node_graph[row] = static_cast<int>(g);
      b.node_mask[row] = 1.0;
    }
    for (std::size_t e = 0; e < f.num_edges(); ++e) {
      b.edge_src.push_back(static_cast<int>(offset) + f.graph.edge_index[e].first);
      b.edge_dst.push_back(static_cast<int>(offset) + f.graph.edge_index[e].second);
      const auto ef = f.graph.edge_features.row(e);
      b.edge_features.data.insert(b.edge_features.data.end(), ef.begin(), ef.end());
      ++b.edge_features.rows;
    }

    for (std::size_t t = 0; t < ds.tasks.size(); ++t) {
      const auto &td = ds.tasks[t];
      if (ds.tags[td.dataset][m] != split) {
        continue;
      }
      auto &tgt = b.targets[t];
      if (td.spec.level == Level::kGraph) {
        std::copy_n(td.graph.row(m).begin(), tgt.cols, tgt.row(g).begin());
      } else if (td.node[m].rows == na) {
        for (std::size_t a = 0; a < na; ++a) {
          std::copy_n(td.node[m].row(a).begin(), tgt.cols,
                      tgt.row(offset + a).begin());
        }
      }
    }
    offset += na;
  }
  if (b.num_edges() > cap.max_edges) {
    throw ShapeError("make_batch: more edges than max_edges");
  }
  b.num_nodes = offset;
  return b;
}

std::vector<std::vector<std::size_t>> plan_epoch(const JointDataset &ds,
                                                 SplitTag split,
                                                 const EpochConfig &cfg,
                                                 int epoch) {
  if (ds.features.size() != ds.size()) {
    throw ShapeError("plan_epoch: features not attached");
  }
  std::vector<double> weight(ds.datasets.size(), 1.0);
  for (const auto &[name, w]: cfg.sampling_weights) {
    if (!(w >= 0.0 && w <= 1.0)) {
      throw ConfigError("sampling weight of '" + name + "' must lie in [0, 1]");
    }
    weight[ds.dataset_index(name)] = w;
  }
  std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull
                      + static_cast<std::uint64_t>(epoch));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::size_t> mols;
  for (std::size_t m: ds.molecules(split)) {
    double w = 0.0;
    for (std::size_t d = 0; d < ds.tags.size(); ++d) {
      if (ds.tags[d][m] == split) {
        w = std::max(w, weight[d]);
      }
    }
    if (w >= 1.0 || unit(rng) < w) {
      mols.push_back(m);
    }
  }
  if (cfg.shuffle) {
    std::shuffle(mols.begin(), mols.end(), rng);
  }
  std::vector<GraphSize> sizes;
  sizes.reserve(mols.size());
  for (std::size_t m: mols) {
    sizes.push_back({ ds.features[m].num_atoms(), ds.features[m].num_edges() });
  }
  const auto packing = pack_ffd(sizes, cfg.cap, cfg.oversize);
  std::vector<std::vector<std::size_t>> plan;
  plan.reserve(packing.packs.size());
  for (const auto &p: packing.packs) {
    std::vector<std::size_t> ids;
    for (std::size_t i: p.graphs) {
      ids.push_back(mols[i]);
    }
    plan.push_back(std::move(ids));
  }
  if (cfg.shuffle) {
    std::shuffle(plan.begin(), plan.end(), rng);
  }
  return plan;
}

EpochIterator::EpochIterator(const JointDataset &ds, SplitTag split,
                             EpochConfig cfg, int epoch)
    : ds_(ds), split_(split), cfg_(std::move(cfg)),
      plan_(plan_epoch(ds_, split_, cfg_, epoch)) {
  if (cfg_.prefetch == 0) {
    cfg_.prefetch = 1;
  }
  producer_ = std::thread([this] { produce(); });
}

EpochIterator::~EpochIterator() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  producer_.join();
}

void EpochIterator::produce() {
  try {
    for (const auto &mols: plan_) {
      PackedBatch b = make_batch(ds_, mols, split_, cfg_.cap);
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stop_ || queue_.size() < cfg_.prefetch; });
      if (stop_) {
        return;
      }
      queue_.push_back(std::move(b));
      cv_.notify_all();
    }
  } catch (...) {
    std::lock_guard lock(mu_);
    error_ = std::current_exception();
  }
  std::lock_guard lock(mu_);
  done_ = true;
  cv_.notify_all();
}

std::optional<PackedBatch> EpochIterator::next() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !queue_.empty() || done_; });
  if (!queue_.empty()) {
    PackedBatch b = std::move(queue_.front());
    queue_.pop_front();
    ++consumed_;
    cv_.notify_all();
    return b;
  }
  if (error_) {
    std::rethrow_exception(error_);
  }
  return std::nullopt;
}

}  // namespace molmix::data
