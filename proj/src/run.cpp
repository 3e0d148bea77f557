// SPDX-License-Identifier: Apache-2.0

#include "molmix/run.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "molmix/blob_store.hpp"
#include "molmix/bytes.hpp"
#include "molmix/error.hpp"

namespace molmix::run {

namespace fs = std::filesystem;

const Preset &preset(const std::string &name) {
  static const std::vector<Preset> presets {
    { "toymix", 300, 128 },
    { "largemix", 200, 768 },
    { "ultralarge", 50, 768 },
  };
  for (const auto &p: presets) {
    if (p.name == name) {
      return p;
    }
  }
  throw ConfigError("unknown preset '" + name + "'");
}

namespace {

// ---- Strict YAML access ------------------------------------------------------

void check_keys(const YAML::Node &n, std::initializer_list<std::string_view> allowed,
                const std::string &where) {
  if (!n.IsMap()) {
    throw ConfigError(where + ": expected a mapping");
  }
  for (const auto &kv: n) {
    const auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
T as(const YAML::Node &n, const std::string &where) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception &) {
    throw ConfigError(where + ": invalid value");
  }
}

template <class T>
void read(const YAML::Node &parent, const char *key, T &out, const std::string &where) {
  const YAML::Node n = parent[key];
  if (n) {
    out = as<T>(n, where + "." + key);
  }
}

YAML::Node section(const YAML::Node &parent, const char *key) {
  const YAML::Node n = parent[key];
  return n ? n : YAML::Node(YAML::NodeType::Map);
}

fs::path resolve(const fs::path &base, const std::string &p) {
  if (p.empty()) {
    return {};
  }
  fs::path path(p);
  if (path.is_relative() && !base.empty()) {
    path = base / path;
  }
  return fs::absolute(path).lexically_normal();
}

std::vector<int> read_steps(const YAML::Node &n, const std::string &where) {
  if (n.IsScalar()) {
    const int k = as<int>(n, where);
    if (k < 1) {
      throw ConfigError(where + ": must be >= 1");
    }
    std::vector<int> steps(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      steps[static_cast<std::size_t>(i)] = i + 1;
    }
    return steps;
  }
  return as<std::vector<int>>(n, where);
}

template <class F>
auto parse_enum(F f, const std::string &text, const std::string &where) {
  try {
    return f(text);
  } catch (const Error &e) {
    throw ConfigError(where + ": " + e.what());
  }
}

gnn::PeEncoderConfig read_pe(const YAML::Node &n, gnn::PeEncoderConfig pe,
                             const std::string &where) {
  check_keys(n, { "enabled", "widths" }, where);
  read(n, "enabled", pe.enabled, where);
  read(n, "widths", pe.widths, where);
  return pe;
}

TaskSpec read_task(const YAML::Node &n, const std::string &where) {
  check_keys(n, { "name", "dataset", "level", "loss", "labels", "norm", "weight",
                  "num_classes", "alpha", "bin_thresholds", "head_widths" },
             where);
  TaskSpec t;
  read(n, "name", t.name, where);
  read(n, "dataset", t.dataset, where);
  std::string level = "graph", loss = "mae", norm = "none";
  read(n, "level", level, where);
  read(n, "loss", loss, where);
  read(n, "norm", norm, where);
  t.level = parse_enum(parse_level, level, where + ".level");
  t.loss = parse_enum(parse_loss_kind, loss, where + ".loss");
  t.norm = parse_enum(feat::parse_norm_kind, norm, where + ".norm");
  read(n, "labels", t.labels, where);
  read(n, "weight", t.weight, where);
  read(n, "num_classes", t.num_classes, where);
  read(n, "alpha", t.alpha, where);
  read(n, "bin_thresholds", t.bin_thresholds, where);
  return t;
}

}  // namespace

RunConfig RunConfig::from_yaml(const std::string &text, const fs::path &base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception &e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (!root.IsMap()) {
    throw ConfigError("config: expected a mapping at the top level");
  }
  check_keys(root, { "seed", "preset", "output_dir", "datasets", "primary", "tasks",
                     "splits", "featurization", "model", "optimizer", "training" },
             "config");
  RunConfig c;
  read(root, "seed", c.seed, "config");
  read(root, "preset", c.preset, "config");
  const Preset &p = run::preset(c.preset);
  std::string out;
  read(root, "output_dir", out, "config");
  c.output_dir = resolve(base_dir, out);

  const YAML::Node ds = root["datasets"];
  if (!ds || !ds.IsSequence() || ds.size() == 0) {
    throw ConfigError("config.datasets: expected a non-empty list");
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::string where = "datasets[" + std::to_string(i) + "]";
    check_keys(ds[i], { "name", "path", "smiles_column" }, where);
    DatasetEntry e;
    std::string path;
    read(ds[i], "name", e.name, where);
    read(ds[i], "path", path, where);
    read(ds[i], "smiles_column", e.smiles_column, where);
    if (path.empty()) {
      throw ConfigError(where + ": path is required");
    }
    e.path = resolve(base_dir, path);
    c.datasets.push_back(std::move(e));
  }
  read(root, "primary", c.primary, "config");
  if (c.primary.empty()) {
    c.primary = c.datasets.front().name;
  }

  const YAML::Node tasks = root["tasks"];
  if (!tasks || !tasks.IsSequence() || tasks.size() == 0) {
    throw ConfigError("config.tasks: expected a non-empty list");
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::string where = "tasks[" + std::to_string(i) + "]";
    c.tasks.push_back(read_task(tasks[i], where));
    if (tasks[i]["head_widths"]) {
      c.task_head_widths[c.tasks.back().name] =
          as<std::vector<int>>(tasks[i]["head_widths"], where + ".head_widths");
    }
  }

  const YAML::Node sp = section(root, "splits");
  check_keys(sp, { "ratios", "seed", "dir" }, "splits");
  c.split_seed = c.seed;
  if (sp["ratios"]) {
    const auto r = as<std::vector<double>>(sp["ratios"], "splits.ratios");
    if (r.size() != 3) {
      throw ConfigError("splits.ratios: expected [train, val, test]");
    }
    c.split_ratios = { r[0], r[1], r[2] };
  }
  read(sp, "seed", c.split_seed, "splits");
  std::string split_dir;
  read(sp, "dir", split_dir, "splits");
  c.split_dir = resolve(base_dir, split_dir);

  const YAML::Node fz = section(root, "featurization");
  check_keys(fz, { "atom_features", "bond_features", "elements", "lap_k", "rwse_steps",
                   "version", "workers", "batch_size", "cache_dir" },
             "featurization");
  auto &f = c.featurization;
  read(fz, "atom_features", f.features.atom_features, "featurization");
  read(fz, "bond_features", f.features.bond_features, "featurization");
  read(fz, "elements", f.features.elements, "featurization");
  read(fz, "lap_k", f.pe.lap_k, "featurization");
  if (fz["rwse_steps"]) {
    f.pe.rwse_steps = read_steps(fz["rwse_steps"], "featurization.rwse_steps");
  }
  read(fz, "version", f.version, "featurization");
  read(fz, "workers", f.workers, "featurization");
  read(fz, "batch_size", f.batch_size, "featurization");
  std::string cache;
  read(fz, "cache_dir", cache, "featurization");
  c.cache_dir = resolve(base_dir, cache);

  const YAML::Node md = section(root, "model");
  check_keys(md, { "type", "layers", "hidden", "pool", "lap_pe", "rwse_pe", "graph_mlp",
                   "node_mlp", "head_widths" },
             "model");
  auto &m = c.model;
  m.hidden = p.hidden;
  std::string type = gnn::to_string(m.type), pool = gnn::to_string(m.pool);
  read(md, "type", type, "model");
  read(md, "pool", pool, "model");
  m.type = parse_enum(gnn::parse_gnn_type, type, "model.type");
  m.pool = parse_enum(gnn::parse_pool_kind, pool, "model.pool");
  read(md, "layers", m.num_layers, "model");
  read(md, "hidden", m.hidden, "model");
  if (md["lap_pe"]) {
    m.lap = read_pe(md["lap_pe"], m.lap, "model.lap_pe");
  }
  if (md["rwse_pe"]) {
    m.rwse = read_pe(md["rwse_pe"], m.rwse, "model.rwse_pe");
  }
  read(md, "graph_mlp", m.graph_mlp, "model");
  read(md, "node_mlp", m.node_mlp, "model");
  read(md, "head_widths", c.head_widths, "model");
  m.seed = c.seed;

  const YAML::Node op = section(root, "optimizer");
  check_keys(op, { "kind", "lr", "beta1", "beta2", "eps", "weight_decay" }, "optimizer");
  std::string kind = "adam";
  read(op, "kind", kind, "optimizer");
  if (kind != "adam") {
    throw ConfigError("optimizer.kind: only 'adam' is supported");
  }
  auto &o = c.train.optimizer;
  read(op, "lr", o.lr, "optimizer");
  read(op, "beta1", o.beta1, "optimizer");
  read(op, "beta2", o.beta2, "optimizer");
  read(op, "eps", o.eps, "optimizer");
  read(op, "weight_decay", o.weight_decay, "optimizer");

  const YAML::Node tr = section(root, "training");
  check_keys(tr, { "epochs", "eval_every", "eval_splits", "shuffle", "prefetch",
                   "max_nodes", "max_edges", "max_graphs", "sampling_weights",
                   "oversize" },
             "training");
  auto &t = c.train;
  t.epochs = p.epochs;
  read(tr, "epochs", t.epochs, "training");
  read(tr, "eval_every", t.eval_every, "training");
  if (tr["eval_splits"]) {
    t.eval_splits.clear();
    for (const auto &s: as<std::vector<std::string>>(tr["eval_splits"],
                                                     "training.eval_splits")) {
      t.eval_splits.push_back(parse_enum(data::parse_split_tag, s, "training.eval_splits"));
    }
  }
  read(tr, "shuffle", t.data.shuffle, "training");
  read(tr, "prefetch", t.data.prefetch, "training");
  read(tr, "max_nodes", t.data.cap.max_nodes, "training");
  read(tr, "max_edges", t.data.cap.max_edges, "training");
  read(tr, "max_graphs", t.data.cap.max_graphs, "training");
  read(tr, "sampling_weights", t.data.sampling_weights, "training");
  std::string oversize = "skip";
  read(tr, "oversize", oversize, "training");
  if (oversize == "skip") {
    t.data.oversize = data::OversizePolicy::kSkip;
  } else if (oversize == "error") {
    t.data.oversize = data::OversizePolicy::kError;
  } else {
    throw ConfigError("training.oversize: expected 'skip' or 'error'");
  }
  t.data.seed = c.seed;

  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read config " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return from_yaml(ss.str(), fs::absolute(path).parent_path());
}

void RunConfig::validate() const {
  run::preset(preset);
  std::set<std::string> names;
  for (const auto &d: datasets) {
    if (d.name.empty()) {
      throw ConfigError("dataset without a name");
    }
    if (!names.insert(d.name).second) {
      throw ConfigError("duplicate dataset '" + d.name + "'");
    }
  }
  if (!names.count(primary)) {
    throw ConfigError("primary dataset '" + primary + "' is not declared");
  }
  std::set<std::string> task_names;
  std::map<std::pair<std::string, std::string>, Level> columns;
  for (const auto &t: tasks) {
    t.validate();
    if (!task_names.insert(t.name).second) {
      throw ConfigError("duplicate task '" + t.name + "'");
    }
    if (!names.count(t.dataset)) {
      throw ConfigError("task '" + t.name + "' references unknown dataset '" + t.dataset
                        + "'");
    }
    for (const auto &l: t.labels) {
      const auto [it, fresh] = columns.emplace(std::pair { t.dataset, l }, t.level);
      if (!fresh && it->second != t.level) {
        throw ConfigError("column '" + l + "' of '" + t.dataset
                          + "' is used at two levels");
      }
    }
  }
  for (const auto &[task, w]: task_head_widths) {
    if (!task_names.count(task)) {
      throw ConfigError("head widths for unknown task '" + task + "'");
    }
  }
  for (const auto &[name, w]: train.data.sampling_weights) {
    if (!names.count(name)) {
      throw ConfigError("sampling weight for unknown dataset '" + name + "'");
    }
    if (!(w >= 0.0 && w <= 1.0)) {
      throw ConfigError("sampling weight of '" + name + "' must lie in [0, 1]");
    }
  }
  split_ratios.validate();
  featurization.validate();
  train.validate();
  if (model.num_layers < 1 || model.hidden < 1) {
    throw ConfigError("model: layers and hidden must be >= 1");
  }
}

std::vector<data::DatasetSchema> RunConfig::schemas() const {
  std::vector<data::DatasetSchema> out;
  for (const auto &d: datasets) {
    data::DatasetSchema s;
    s.name = d.name;
    s.smiles_column = d.smiles_column;
    std::set<std::string> seen;
    for (const auto &t: tasks) {
      if (t.dataset != d.name) {
        continue;
      }
      for (const auto &l: t.labels) {
        if (seen.insert(l).second) {
          s.columns.push_back({ l, t.level });
        }
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

Json RunConfig::to_json() const {
  Json j;
  j["seed"] = seed;
  j["preset"] = preset;
  j["datasets"] = Json::array();
  for (const auto &d: datasets) {
    j["datasets"].push_back(
        { { "name", d.name }, { "path", d.path.string() }, { "smiles_column", d.smiles_column } });
  }
  j["primary"] = primary;
  j["tasks"] = Json::array();
  for (const auto &t: tasks) {
    Json jt;
    jt["name"] = t.name;
    jt["dataset"] = t.dataset;
    jt["level"] = to_string(t.level);
    jt["loss"] = to_string(t.loss);
    jt["labels"] = t.labels;
    jt["norm"] = feat::to_string(t.norm);
    jt["weight"] = t.weight;
    jt["num_classes"] = t.num_classes;
    jt["alpha"] = t.alpha;
    jt["bin_thresholds"] = t.bin_thresholds;
    if (const auto it = task_head_widths.find(t.name); it != task_head_widths.end()) {
      jt["head_widths"] = it->second;
    }
    j["tasks"].push_back(std::move(jt));
  }
  j["splits"] = { { "ratios", { split_ratios.train, split_ratios.val, split_ratios.test } },
                  { "seed", split_seed },
                  { "dir", split_dir.string() } };
  const auto &f = featurization;
  j["featurization"] = { { "atom_features", f.features.atom_features },
                         { "bond_features", f.features.bond_features },
                         { "elements", f.features.elements },
                         { "lap_k", f.pe.lap_k },
                         { "rwse_steps", f.pe.rwse_steps },
                         { "version", f.version },
                         { "workers", f.workers },
                         { "batch_size", f.batch_size },
                         { "cache_dir", cache_dir.string() } };
  j["model"] = { { "type", gnn::to_string(model.type) },
                 { "layers", model.num_layers },
                 { "hidden", model.hidden },
                 { "pool", gnn::to_string(model.pool) },
                 { "lap_pe", { { "enabled", model.lap.enabled }, { "widths", model.lap.widths } } },
                 { "rwse_pe",
                   { { "enabled", model.rwse.enabled }, { "widths", model.rwse.widths } } },
                 { "graph_mlp", model.graph_mlp },
                 { "node_mlp", model.node_mlp },
                 { "head_widths", head_widths } };
  const auto &o = train.optimizer;
  j["optimizer"] = { { "kind", "adam" },       { "lr", o.lr },   { "beta1", o.beta1 },
                     { "beta2", o.beta2 },     { "eps", o.eps }, { "weight_decay", o.weight_decay } };
  Json splits = Json::array();
  for (auto s: train.eval_splits) {
    splits.push_back(data::to_string(s));
  }
  const auto &d = train.data;
  Json weights = Json::object();
  for (const auto &[k, v]: d.sampling_weights) {
    weights[k] = v;
  }
  j["training"] = { { "epochs", train.epochs },
                    { "eval_every", train.eval_every },
                    { "eval_splits", splits },
                    { "shuffle", d.shuffle },
                    { "prefetch", d.prefetch },
                    { "max_nodes", d.cap.max_nodes },
                    { "max_edges", d.cap.max_edges },
                    { "max_graphs", d.cap.max_graphs },
                    { "sampling_weights", weights },
                    { "oversize", d.oversize == data::OversizePolicy::kSkip ? "skip" : "error" } };
  return j;
}

// ---- Pipeline --------------------------------------------------------------------

std::vector<const data::LabelTable *> Ingested::pointers() const {
  std::vector<const data::LabelTable *> out;
  for (const auto &t: tables) {
    out.push_back(&t);
  }
  return out;
}

Ingested ingest(const RunConfig &cfg) {
  Ingested out;
  const auto schemas = cfg.schemas();
  for (std::size_t i = 0; i < cfg.datasets.size(); ++i) {
    const auto &d = cfg.datasets[i];
    if (!fs::exists(d.path)) {
      throw DataError("dataset '" + d.name + "': file not found: " + d.path.string());
    }
    data::IngestReport report;
    auto table = data::ingest_csv(d.path, schemas[i], &report);
    if (table.size() == 0) {
      throw DataError("dataset '" + d.name + "' has no usable molecules");
    }
    out.tables.push_back(std::move(table));
    out.reports.push_back(std::move(report));
  }
  return out;
}

Json ingest_stats(const RunConfig &cfg, const Ingested &data) {
  Json out = Json::array();
  for (std::size_t i = 0; i < data.tables.size(); ++i) {
    const auto &t = data.tables[i];
    const auto &r = data.reports[i];
    Json j;
    j["dataset"] = cfg.datasets[i].name;
    j["# mols"] = t.size();
    j["# G. labels"] = t.graph_columns.size();
    j["# N. labels"] = t.node_columns.size();
    j["% G. sparsity"] = t.graph_columns.empty() ? 0.0 : 100.0 * t.graph_sparsity();
    j["% N. sparsity"] = t.node_columns.empty() ? 0.0 : 100.0 * t.node_sparsity();
    j["rows_read"] = r.rows_read;
    j["rows_skipped"] = r.skipped.size();
    j["duplicates_merged"] = r.duplicates_merged;
    j["conflicts"] = r.conflicts;
    out.push_back(std::move(j));
  }
  return out;
}

std::map<std::string, data::SplitAssignment> splits_for(const RunConfig &cfg,
                                                        const Ingested &data) {
  if (cfg.split_dir.empty()) {
    const auto ptrs = data.pointers();
    return data::make_splits(ptrs, cfg.primary, cfg.split_ratios, cfg.split_seed);
  }
  std::map<std::string, data::SplitAssignment> out;
  for (const auto &t: data.tables) {
    const auto path = cfg.split_dir / (t.dataset + ".json");
    if (!fs::exists(path)) {
      throw DataError("split file not found: " + path.string());
    }
    out.emplace(t.dataset, data::read_split_file(path, t.size(), t.dataset));
  }
  return out;
}

void write_splits(const fs::path &dir,
                  const std::map<std::string, data::SplitAssignment> &splits) {
  fs::create_directories(dir);
  for (const auto &[name, s]: splits) {
    data::write_split_file(dir / (name + ".json"), s);
  }
}

Json split_stats(const std::map<std::string, data::SplitAssignment> &splits) {
  Json out = Json::object();
  for (const auto &[name, s]: splits) {
    Json j;
    for (auto tag: { data::SplitTag::kTrain, data::SplitTag::kVal, data::SplitTag::kTest,
                     data::SplitTag::kTestSeen }) {
      j[data::to_string(tag)] = s.count(tag);
    }
    out[name] = std::move(j);
  }
  return out;
}

Prepared prepare(const RunConfig &cfg) {
  Prepared p;
  p.ingested = ingest(cfg);
  p.splits = splits_for(cfg, p.ingested);
  const auto ptrs = p.ingested.pointers();
  p.joint = data::build_joint(ptrs, p.splits, cfg.tasks);
  std::optional<data::MolCache> cache;
  if (!cfg.cache_dir.empty()) {
    cache.emplace(cfg.cache_dir);
  }
  data::attach_features(p.joint, cfg.featurization, cache ? &*cache : nullptr,
                        &p.featurize_stats);
  return p;
}

gnn::ModelConfig resolve_model(const RunConfig &cfg, const data::JointDataset &ds) {
  gnn::ModelConfig m = cfg.model;
  const auto &f = cfg.featurization;
  m.node_dim = static_cast<int>(f.features.node_dim());
  m.edge_dim = static_cast<int>(f.features.edge_dim());
  m.lap_k = f.pe.lap_k;
  m.rwse_steps = static_cast<int>(f.pe.rwse_steps.size());
  m.seed = cfg.seed;
  m.heads.clear();
  for (const auto &t: ds.tasks) {
    auto h = gnn::HeadSpec::from_task(t.spec);
    const auto it = cfg.task_head_widths.find(t.spec.name);
    h.widths = it != cfg.task_head_widths.end() ? it->second : cfg.head_widths;
    m.heads.push_back(std::move(h));
  }
  m.validate();
  return m;
}

namespace {

std::string params_digest(const gnn::ParamStore &params) {
  ByteWriter w;
  for (const auto &p: params.all()) {
    w.put_string(p.name);
    w.put_matrix(p.value);
  }
  return sha256_hex(w.bytes());
}

Json norm_json(const data::JointDataset &ds) {
  Json out = Json::array();
  for (const auto &t: ds.tasks) {
    for (const auto &n: t.norms) {
      out.push_back({ { "task", t.spec.name },
                      { "label", n.name },
                      { "kind", feat::to_string(n.kind) },
                      { "a", n.a },
                      { "b", n.b } });
    }
  }
  return out;
}

void write_text(const fs::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
}

std::string summary(const train::EpochRecord &rec, std::span<const mt::MetricReport> reports) {
  std::ostringstream os;
  os << "epoch " << rec.epoch << " loss " << rec.loss;
  for (const auto &r: reports) {
    for (const auto &t: r.tasks) {
      for (const auto &[metric, v]: t.averages) {
        if (metric == "mae" || metric == "auroc" || metric == "accuracy") {
          os << " " << r.split << "/" << t.task << "/" << metric << "=" << v;
        }
      }
    }
  }
  return os.str();
}

}  // namespace

std::string manifest_digest(const Json &manifest) {
  Json copy = manifest;
  copy.erase("runtime");
  copy.erase("digest");
  return sha256_hex(copy.dump());
}

TrainOutcome run_train(const RunConfig &cfg, const fs::path &out_dir, const Logger &log) {
  const auto start = std::chrono::steady_clock::now();
  auto p = prepare(cfg);
  if (log) {
    log("prepared " + std::to_string(p.joint.size()) + " molecules ("
        + std::to_string(p.featurize_stats.cache_hits) + " cache hits)");
  }
  TrainOutcome out;
  out.model = std::make_unique<gnn::Model>(resolve_model(cfg, p.joint));
  if (log) {
    log("model parameters: " + std::to_string(out.model->num_params()));
  }
  out.result = train::fit(*out.model, p.joint, cfg.train,
                          [&](const train::EpochRecord &rec,
                              std::span<const mt::MetricReport> reports) {
                            if (log) {
                              log(summary(rec, reports));
                            }
                          });
  // Final metrics on every split that exists.
  std::vector<mt::MetricReport> final_reports;
  for (auto tag: train::present_splits(p.joint)) {
    final_reports.push_back(train::evaluate(*out.model, p.joint, tag, cfg.train.data.cap,
                                            cfg.train.epochs - 1));
  }

  Json &m = out.manifest;
  m["format"] = "molmix-run-manifest/1";
  m["config"] = cfg.to_json();
  m["seed"] = cfg.seed;
  m["datasets"] = ingest_stats(cfg, p.ingested);
  m["splits"] = split_stats(p.splits);
  m["joint_molecules"] = p.joint.size();
  m["normalization"] = norm_json(p.joint);
  m["parameters"] = out.model->num_params();
  Json epochs = Json::array();
  for (const auto &e: out.result.epochs) {
    Json je { { "epoch", e.epoch }, { "loss", e.loss }, { "batches", e.batches } };
    je["task_loss"] = Json::object();
    for (const auto &[k, v]: e.task_loss) {
      je["task_loss"][k] = v;
    }
    epochs.push_back(std::move(je));
  }
  m["epochs"] = std::move(epochs);
  m["metrics"] = Json::parse(mt::to_json(out.result.reports));
  m["final_metrics"] = Json::parse(mt::to_json(final_reports));
  m["params_sha256"] = params_digest(out.model->params());
  out.digest = manifest_digest(m);
  m["digest"] = out.digest;
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  m["runtime"] = { { "wall_clock_s", seconds },
                   { "output_dir", out_dir.string() },
                   { "featurized", p.featurize_stats.featurized },
                   { "cache_hits", p.featurize_stats.cache_hits },
                   { "corrupted_cache_entries", p.featurize_stats.corrupted } };

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_splits(out_dir / "splits", p.splits);
    std::vector<mt::MetricReport> all = out.result.reports;
    all.insert(all.end(), final_reports.begin(), final_reports.end());
    write_text(out_dir / "metrics.csv", mt::to_csv(all));
    write_text(out_dir / "metrics.json", mt::to_json(all));
    write_text(out_dir / "manifest.json", m.dump(2) + "\n");
    gnn::save_checkpoint(out_dir / "model.ckpt",
                         { cfg.to_json().dump(2), out.digest, cfg.train.epochs,
                           out.model->params().all() });
  }
  out.result.reports.insert(out.result.reports.end(), final_reports.begin(),
                            final_reports.end());
  return out;
}

mt::MetricReport run_eval(const fs::path &checkpoint, data::SplitTag split,
                          const Logger &log) {
  const auto ck = gnn::load_checkpoint(checkpoint);
  const auto cfg = RunConfig::from_yaml(ck.config_text);
  const auto p = prepare(cfg);
  if (p.joint.molecules(split).empty()) {
    throw DataError("split '" + data::to_string(split) + "' has no molecules");
  }
  gnn::Model model(resolve_model(cfg, p.joint));
  gnn::load_params(model.params(), ck.params);
  if (log) {
    log("loaded " + checkpoint.string() + " (trained " + std::to_string(ck.epoch) + " epochs)");
  }
  return train::evaluate(model, p.joint, split, cfg.train.data.cap, ck.epoch - 1);
}

}  // namespace molmix::run
