// SPDX-License-Identifier: Apache-2.0

#include "molmix/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "molmix/blob_store.hpp"
#include "molmix/bytes.hpp"
#include "molmix/error.hpp"

namespace molmix::gnn {
namespace {

V constant(Tape &tape, std::size_t rows, std::size_t cols,
           std::vector<double> data) {
  return tape.constant({ rows, cols }, std::move(data));
}

V from_matrix(Tape &tape, const Matrix &m) {
  return constant(tape, m.rows, m.cols, m.data);
}

V one_plus(const V &eps) {
  return ad::add(eps, eps.tape()->scalar(1.0));
}

void check_edges(const V &h, const EdgeList &edges, const char *who) {
  if (edges.src.size() != edges.dst.size() || h.shape().rows != edges.n) {
    throw ShapeError(std::string(who) + ": node count or edge list mismatch");
  }
}

}  // namespace

GnnType parse_gnn_type(const std::string &name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), ::tolower);
  if (s == "gcn") {
    return GnnType::kGcn;
  }
  if (s == "gin") {
    return GnnType::kGin;
  }
  if (s == "gine") {
    return GnnType::kGine;
  }
  throw ConfigError("unknown GNN type '" + name + "'");
}

std::string to_string(GnnType t) {
  switch (t) {
  case GnnType::kGcn: return "gcn";
  case GnnType::kGin: return "gin";
  case GnnType::kGine: return "gine";
  }
  return "gin";
}

PoolKind parse_pool_kind(const std::string &name) {
  if (name == "mean") {
    return PoolKind::kMean;
  }
  if (name == "sum") {
    return PoolKind::kSum;
  }
  throw ConfigError("unknown pooling '" + name + "'");
}

std::string to_string(PoolKind p) {
  return p == PoolKind::kMean ? "mean" : "sum";
}

V linear(const V &x, const Linear &l) {
  V y = ad::matmul(x, l.w);
  return l.b.valid() ? ad::add(y, l.b) : y;
}

V mlp(const V &x, std::span<const Linear> layers, bool final_relu) {
  V h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = linear(h, layers[i]);
    if (i + 1 < layers.size() || final_relu) {
      h = ad::relu(h);
    }
  }
  return h;
}

V gcn_layer(const V &h, const EdgeList &edges, const V &w) {
  check_edges(h, edges, "gcn_layer");
  Tape &tape = *h.tape();
  std::vector<double> deg(edges.n, 1.0);
  for (int d: edges.dst) {
    if (d < 0 || static_cast<std::size_t>(d) >= edges.n) {
      throw ShapeError("gcn_layer: edge endpoint out of range");
    }
    deg[static_cast<std::size_t>(d)] += 1.0;
  }
  std::vector<double> self(edges.n), coef(edges.src.size());
  for (std::size_t v = 0; v < edges.n; ++v) {
    self[v] = 1.0 / deg[v];
  }
  for (std::size_t e = 0; e < coef.size(); ++e) {
    const auto s = static_cast<std::size_t>(edges.src[e]);
    if (s >= edges.n) {
      throw ShapeError("gcn_layer: edge endpoint out of range");
    }
    coef[e] = 1.0 / std::sqrt(deg[s] * deg[static_cast<std::size_t>(edges.dst[e])]);
  }
  const V hw = ad::matmul(h, w);
  V out = ad::row_scale(hw, constant(tape, edges.n, 1, std::move(self)));
  if (!edges.src.empty()) {
    const V msg = ad::row_scale(ad::gather_rows(hw, edges.src),
                                constant(tape, edges.src.size(), 1, std::move(coef)));
    out = ad::add(out, ad::segment_sum(msg, edges.dst, edges.n));
  }
  return ad::relu(out);
}

V gin_layer(const V &h, const EdgeList &edges, const V &eps,
            std::span<const Linear> mlp_layers) {
  check_edges(h, edges, "gin_layer");
  V z = ad::mul(h, one_plus(eps));
  if (!edges.src.empty()) {
    z = ad::add(z, ad::segment_sum(ad::gather_rows(h, edges.src), edges.dst,
                                   edges.n));
  }
  return mlp(z, mlp_layers, false);
}

V gine_layer(const V &h, const V &edge_features, const EdgeList &edges,
             const V &eps, const Linear &edge_proj,
             std::span<const Linear> mlp_layers) {
  check_edges(h, edges, "gine_layer");
  if (edge_features.shape().rows != edges.src.size()) {
    throw ShapeError("gine_layer: edge feature rows differ from edge count");
  }
  V z = ad::mul(h, one_plus(eps));
  if (!edges.src.empty()) {
    const V msg = ad::relu(
        ad::add(ad::gather_rows(h, edges.src), linear(edge_features, edge_proj)));
    z = ad::add(z, ad::segment_sum(msg, edges.dst, edges.n));
  }
  return mlp(z, mlp_layers, false);
}

V pool(const V &h, std::span<const int> node_graph, const V &node_weight,
       std::size_t num_graphs) {
  return ad::segment_sum(ad::row_scale(h, node_weight), node_graph, num_graphs);
}

// ---- Parameters ------------------------------------------------------------

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

std::size_t ParamStore::add(const std::string &name, std::size_t rows,
                            std::size_t cols, std::mt19937_64 *rng) {
  for (const auto &p: params_) {
    if (p.name == name) {
      throw Error(ErrorCategory::kInternal, "duplicate parameter " + name);
    }
  }
  Param p { name, Matrix(rows, cols) };
  if (rng != nullptr) {
    const double a = glorot_bound(rows, cols);
    std::uniform_real_distribution<double> dist(-a, a);
    for (auto &x: p.value.data) {
      x = dist(*rng);
    }
  }
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto &p: params_) {
    n += p.value.data.size();
  }
  return n;
}

std::size_t ParamStore::index(const std::string &name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) {
      return i;
    }
  }
  throw ConfigError("no parameter named '" + name + "'");
}

std::vector<V> ParamStore::leaves(Tape &tape, bool requires_grad) const {
  std::vector<V> out;
  out.reserve(params_.size());
  for (const auto &p: params_) {
    out.push_back(
        tape.leaf({ p.value.rows, p.value.cols }, p.value.data, requires_grad));
  }
  return out;
}

// ---- Model -----------------------------------------------------------------

int HeadSpec::output_dim() const {
  return loss == LossKind::kHybrid ? num_labels * num_classes : num_labels;
}

HeadSpec HeadSpec::from_task(const TaskSpec &t) {
  HeadSpec h;
  h.task = t.name;
  h.level = t.level;
  h.loss = t.loss;
  h.num_labels = static_cast<int>(t.labels.size());
  h.num_classes = t.num_classes;
  return h;
}

void ModelConfig::validate() const {
  if (num_layers < 1) {
    throw ConfigError("model needs at least one GNN layer");
  }
  if (hidden < 1 || node_dim < 1) {
    throw ConfigError("model widths must be positive");
  }
  if (type == GnnType::kGine && edge_dim < 1) {
    throw ConfigError("GINE needs edge features");
  }
  auto widths_ok = [](const std::vector<int> &w) {
    return std::all_of(w.begin(), w.end(), [](int x) { return x > 0; });
  };
  for (const auto *pe: { &lap, &rwse }) {
    if (pe->enabled && (pe->widths.empty() || !widths_ok(pe->widths))) {
      throw ConfigError("PE encoder widths must be positive and non-empty");
    }
  }
  if (lap.enabled && lap_k < 1) {
    throw ConfigError("Laplacian PE encoder enabled without eigenvectors");
  }
  if (rwse.enabled && rwse_steps < 1) {
    throw ConfigError("RWSE encoder enabled without walk steps");
  }
  if (!widths_ok(graph_mlp) || !widths_ok(node_mlp)) {
    throw ConfigError("level MLP widths must be positive");
  }
  if (heads.empty()) {
    throw ConfigError("model has no task heads");
  }
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const auto &h = heads[i];
    if (h.num_labels < 1 || !widths_ok(h.widths)) {
      throw ConfigError("head '" + h.task + "' has invalid widths");
    }
    if (h.loss == LossKind::kHybrid && h.num_classes < 2) {
      throw ConfigError("hybrid head '" + h.task + "' needs num_classes >= 2");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (heads[j].task == h.task) {
        throw ConfigError("two heads for task '" + h.task + "'");
      }
    }
  }
}

std::vector<Model::LinearIds> Model::add_mlp(const std::string &prefix, int in,
                                             std::span<const int> widths,
                                             std::mt19937_64 &rng) {
  std::vector<LinearIds> ids;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string base = prefix + "." + std::to_string(i);
    LinearIds l;
    l.w = params_.add(base + ".w", static_cast<std::size_t>(in),
                      static_cast<std::size_t>(widths[i]), &rng);
    l.b = params_.add(base + ".b", 1, static_cast<std::size_t>(widths[i]),
                      nullptr);
    ids.push_back(l);
    in = widths[i];
  }
  return ids;
}

std::vector<Linear> Model::bind(std::span<const V> p,
                                std::span<const LinearIds> ids) {
  std::vector<Linear> out;
  for (const auto &l: ids) {
    out.push_back({ p[l.w], l.bias ? p[l.b] : V {} });
  }
  return out;
}

Model::Model(ModelConfig cfg): cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  if (cfg_.lap.enabled) {
    lap_enc_ = add_mlp("pe.lap", 2 * cfg_.lap_k, cfg_.lap.widths, rng);
  }
  if (cfg_.rwse.enabled) {
    rwse_enc_ = add_mlp("pe.rwse", cfg_.rwse_steps, cfg_.rwse.widths, rng);
  }
  int in = cfg_.node_dim + cfg_.lap.output_dim() + cfg_.rwse.output_dim();
  const int hid = cfg_.hidden;
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string base = "gnn." + std::to_string(l);
    LayerIds ids;
    if (cfg_.type == GnnType::kGcn) {
      ids.gcn_w = params_.add(base + ".w", static_cast<std::size_t>(in),
                              static_cast<std::size_t>(hid), &rng);
    } else {
      ids.eps = params_.add(base + ".eps", 1, 1, nullptr);
      if (cfg_.type == GnnType::kGine) {
        ids.edge.w = params_.add(base + ".edge.w",
                                 static_cast<std::size_t>(cfg_.edge_dim),
                                 static_cast<std::size_t>(in), &rng);
        ids.edge.b = params_.add(base + ".edge.b", 1,
                                 static_cast<std::size_t>(in), nullptr);
      }
      const int widths[] = { hid, hid };
      ids.mlp = add_mlp(base + ".mlp", in, widths, rng);
    }
    layers_.push_back(std::move(ids));
    in = hid;
  }
  const bool any_graph = std::any_of(cfg_.heads.begin(), cfg_.heads.end(),
                                     [](const HeadSpec &h) {
                                       return h.level == Level::kGraph;
                                     });
  const bool any_node = std::any_of(cfg_.heads.begin(), cfg_.heads.end(),
                                    [](const HeadSpec &h) {
                                      return h.level == Level::kNode;
                                    });
  if (any_graph) {
    graph_mlp_ = add_mlp("level.graph", hid, cfg_.graph_mlp, rng);
  }
  if (any_node) {
    node_mlp_ = add_mlp("level.node", hid, cfg_.node_mlp, rng);
  }
  for (const auto &h: cfg_.heads) {
    const auto &level = h.level == Level::kGraph ? cfg_.graph_mlp : cfg_.node_mlp;
    const int head_in = level.empty() ? hid : level.back();
    std::vector<int> widths = h.widths;
    widths.push_back(h.output_dim());
    heads_.push_back(add_mlp("head." + h.task, head_in, widths, rng));
  }
}

V Model::encode_pes(Tape &tape, std::span<const V> p,
                     const data::PackedBatch &b) const {
  const std::size_t n = b.max_nodes();
  if (b.node_features.cols != static_cast<std::size_t>(cfg_.node_dim)
      || b.node_features.rows != n) {
    throw ShapeError("forward: node feature width differs from the model");
  }
  std::vector<V> parts { from_matrix(tape, b.node_features) };
  if (cfg_.lap.enabled) {
    if (b.lap_vecs.cols != static_cast<std::size_t>(cfg_.lap_k)) {
      throw ShapeError("forward: Laplacian PE width differs from the model");
    }
    const V lap_in[] = { from_matrix(tape, b.lap_vecs),
                         from_matrix(tape, b.lap_vals) };
    parts.push_back(mlp(ad::concat<double>(lap_in), bind(p, lap_enc_), false));
  }
  if (cfg_.rwse.enabled) {
    if (b.rwse.cols != static_cast<std::size_t>(cfg_.rwse_steps)) {
      throw ShapeError("forward: RWSE width differs from the model");
    }
    parts.push_back(mlp(from_matrix(tape, b.rwse), bind(p, rwse_enc_), false));
  }
  return parts.size() == 1 ? parts[0] : ad::concat<double>(parts);
}

Outputs Model::forward(Tape &tape, std::span<const V> p,
                       const data::PackedBatch &b) const {
  if (p.size() != params_.size()) {
    throw ShapeError("forward: parameter count mismatch");
  }
  const std::size_t n = b.max_nodes();
  V h = encode_pes(tape, p, b);

  const EdgeList edges { b.edge_src, b.edge_dst, n };
  V edge_features;
  if (cfg_.type == GnnType::kGine) {
    if (b.edge_features.cols != static_cast<std::size_t>(cfg_.edge_dim)) {
      throw ShapeError("forward: edge feature width differs from the model");
    }
    edge_features = from_matrix(tape, b.edge_features);
  }
  for (const auto &layer: layers_) {
    switch (cfg_.type) {
    case GnnType::kGcn:
      h = gcn_layer(h, edges, p[layer.gcn_w]);
      break;
    case GnnType::kGin:
      h = ad::relu(gin_layer(h, edges, p[layer.eps], bind(p, layer.mlp)));
      break;
    case GnnType::kGine:
      h = ad::relu(gine_layer(h, edge_features, edges, p[layer.eps],
                              { p[layer.edge.w], p[layer.edge.b] },
                              bind(p, layer.mlp)));
      break;
    }
  }

  Outputs out;
  out.node_embeddings = h;
  std::vector<double> weight(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    if (b.node_mask[v] != 0.0) {
      const auto g = static_cast<std::size_t>(b.node_graph[v]);
      weight[v] = cfg_.pool == PoolKind::kMean ? 1.0 / b.graph_nodes[g] : 1.0;
    }
  }
  V graph_h, node_h;
  if (!graph_mlp_.empty() || std::any_of(cfg_.heads.begin(), cfg_.heads.end(),
                                         [](const HeadSpec &x) {
                                           return x.level == Level::kGraph;
                                         })) {
    out.graph_embeddings =
        pool(h, b.node_graph, constant(tape, n, 1, std::move(weight)),
             b.max_graphs());
    graph_h = mlp(out.graph_embeddings, bind(p, graph_mlp_), true);
  }
  if (!node_mlp_.empty()) {
    node_h = mlp(h, bind(p, node_mlp_), true);
  } else {
    node_h = h;
  }

  for (std::size_t i = 0; i < cfg_.heads.size(); ++i) {
    const auto &spec = cfg_.heads[i];
    const V &in = spec.level == Level::kGraph ? graph_h : node_h;
    V y = mlp(in, bind(p, heads_[i]), false);
    if (spec.loss == LossKind::kBce) {
      y = ad::sigmoid(y);
    } else if (spec.loss == LossKind::kHybrid) {
      const auto rows = y.shape().rows;
      const auto c = static_cast<std::size_t>(spec.num_classes);
      y = ad::reshape(
          ad::row_softmax(ad::reshape(
              y, { rows * static_cast<std::size_t>(spec.num_labels), c })),
          { rows, static_cast<std::size_t>(spec.output_dim()) });
    }
    out.heads.push_back(y);
  }
  return out;
}

// ---- Checkpoints -------------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = { 'M', 'M', 'C', 'K', 'P', 'T', '0', '1' };
constexpr std::uint32_t kCkptVersion = 1;

std::vector<std::byte> digest(std::span<const std::byte> payload) {
  const std::string hex = sha256_hex(payload);
  std::vector<std::byte> out(32);
  for (std::size_t i = 0; i < 32; ++i) {
    out[i] = static_cast<std::byte>(std::stoi(hex.substr(2 * i, 2), nullptr, 16));
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &c) {
  ByteWriter w;
  w.put_string(c.config_text);
  w.put_string(c.manifest_ref);
  w.put<std::int32_t>(c.epoch);
  w.put<std::uint64_t>(c.params.size());
  for (const auto &p: c.params) {
    w.put_string(p.name);
    w.put_matrix(p.value);
  }
  const auto payload = w.take();
  const auto sum = digest(payload);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw DataError("cannot write checkpoint " + path.string());
    }
    const std::uint64_t len = payload.size();
    out.write(kCkptMagic, 8);
    out.write(reinterpret_cast<const char *>(&kCkptVersion), 4);
    out.write(reinterpret_cast<const char *>(&len), 8);
    out.write(reinterpret_cast<const char *>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    out.write(reinterpret_cast<const char *>(sum.data()), 32);
    if (!out) {
      throw DataError("failed writing checkpoint " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open checkpoint " + path.string());
  }
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char *>(&version), 4);
  in.read(reinterpret_cast<char *>(&len), 8);
  if (!in || std::memcmp(magic, kCkptMagic, 8) != 0) {
    throw DataError(path.string() + " is not a checkpoint");
  }
  if (version != kCkptVersion) {
    throw DataError("checkpoint format version " + std::to_string(version)
                    + " is not supported");
  }
  const auto size = std::filesystem::file_size(path);
  if (len + 52 != size) {
    throw DataError("checkpoint " + path.string() + " is truncated");
  }
  std::vector<std::byte> payload(len), sum(32);
  in.read(reinterpret_cast<char *>(payload.data()),
          static_cast<std::streamsize>(len));
  in.read(reinterpret_cast<char *>(sum.data()), 32);
  if (!in || digest(payload) != sum) {
    throw DataError("checkpoint " + path.string() + " failed its checksum");
  }
  ByteReader r(payload);
  Checkpoint c;
  c.config_text = r.get_string();
  c.manifest_ref = r.get_string();
  c.epoch = r.get<std::int32_t>();
  const auto np = r.get<std::uint64_t>();
  if (np > len) {
    throw DataError("checkpoint: bad parameter count");
  }
  for (std::uint64_t i = 0; i < np; ++i) {
    Param p;
    p.name = r.get_string();
    p.value = r.get_matrix();
    c.params.push_back(std::move(p));
  }
  if (!r.done()) {
    throw DataError("checkpoint: trailing bytes");
  }
  return c;
}

void load_params(ParamStore &store, std::span<const Param> params) {
  if (params.size() != store.size()) {
    throw ConfigError("checkpoint has " + std::to_string(params.size())
                      + " parameters, model expects "
                      + std::to_string(store.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto &dst = store[i];
    if (dst.name != params[i].name || dst.value.rows != params[i].value.rows
        || dst.value.cols != params[i].value.cols) {
      throw ConfigError("checkpoint parameter '" + params[i].name
                        + "' does not match the model");
    }
    dst.value = params[i].value;
  }
}

}  // namespace molmix::gnn
