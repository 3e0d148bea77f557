// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "molmix/batch.hpp"
#include "molmix/matrix.hpp"
#include "molmix/task.hpp"
#include "molmix/tensor.hpp"

namespace molmix::gnn {

using V = ad::Var<double>;
using Tape = ad::Tape<double>;

enum class GnnType {
  kGcn,
  kGin,
  kGine,
};

enum class PoolKind {
  kMean,
  kSum,
};

GnnType parse_gnn_type(const std::string &name);
std::string to_string(GnnType t);
PoolKind parse_pool_kind(const std::string &name);
std::string to_string(PoolKind p);

// ---- Layers ----------------------------------------------------------------

struct Linear {
  V w;  // [in x out]
  V b;  // [1 x out]; invalid for bias-free layers
};

V linear(const V &x, const Linear &l);

/// Applies the layers in turn with relu between them, and after the last
/// one when `final_relu` is set.
V mlp(const V &x, std::span<const Linear> layers, bool final_relu);

/// Directed message edges src[e] -> dst[e] over `n` nodes.
struct EdgeList {
  std::span<const int> src;
  std::span<const int> dst;
  std::size_t n = 0;
};

/// relu(D^-1/2 (A + I) D^-1/2 H W) with degrees counted on A + I.
V gcn_layer(const V &h, const EdgeList &edges, const V &w);

/// MLP((1 + eps) H_v + sum_{u -> v} H_u); relu only between MLP layers.
V gin_layer(const V &h, const EdgeList &edges, const V &eps,
            std::span<const Linear> mlp_layers);

/// MLP((1 + eps) H_v + sum_{u -> v} relu(H_u + E_uv W_e + b_e)).
V gine_layer(const V &h, const V &edge_features, const EdgeList &edges,
             const V &eps, const Linear &edge_proj,
             std::span<const Linear> mlp_layers);

/// Sums w(v) * H_v into graph rows; w is [n x 1].
V pool(const V &h, std::span<const int> node_graph, const V &node_weight,
       std::size_t num_graphs);

// ---- Parameters ------------------------------------------------------------

struct Param {
  std::string name;
  Matrix value;
};

class ParamStore {
 public:
  // Glorot-uniform entries drawn from `rng`, or zeros when it is null.
  std::size_t add(const std::string &name, std::size_t rows, std::size_t cols,
                  std::mt19937_64 *rng);

  std::size_t size() const { return params_.size(); }
  std::size_t count() const;  // total scalar parameters
  const Param &operator[](std::size_t i) const { return params_[i]; }
  Param &operator[](std::size_t i) { return params_[i]; }
  std::size_t index(const std::string &name) const;
  const std::vector<Param> &all() const { return params_; }

  std::vector<V> leaves(Tape &tape, bool requires_grad = true) const;

 private:
  std::vector<Param> params_;
};

double glorot_bound(std::size_t fan_in, std::size_t fan_out);

// ---- Model -----------------------------------------------------------------

struct PeEncoderConfig {
  bool enabled = true;
  std::vector<int> widths { 16, 16 };  // MLP layer outputs

  int output_dim() const { return enabled ? widths.back() : 0; }
};

struct HeadSpec {
  std::string task;
  Level level = Level::kGraph;
  LossKind loss = LossKind::kMae;
  int num_labels = 1;
  int num_classes = 0;  // hybrid
  std::vector<int> widths;  // hidden widths before the output layer

  int output_dim() const;
  static HeadSpec from_task(const TaskSpec &t);
};

struct ModelConfig {
  GnnType type = GnnType::kGin;
  int num_layers = 4;
  int hidden = 128;
  PoolKind pool = PoolKind::kMean;
  PeEncoderConfig lap;
  PeEncoderConfig rwse;
  std::vector<int> graph_mlp { 64, 64 };
  std::vector<int> node_mlp { 64, 64 };
  std::vector<HeadSpec> heads;
  std::uint64_t seed = 0;

  // Input widths, taken from the featurization and PE settings.
  int node_dim = 0;
  int edge_dim = 0;
  int lap_k = 0;
  int rwse_steps = 0;

  void validate() const;
};

/// Head outputs, aligned with ModelConfig::heads. Graph heads are
/// [max_graphs x out], node heads [max_nodes x out]. bce heads emit
/// probabilities and hybrid heads a softmax per label block.
struct Outputs {
  std::vector<V> heads;
  V node_embeddings;   // after the GNN stack
  V graph_embeddings;  // after pooling
};

class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig &config() const { return cfg_; }
  ParamStore &params() { return params_; }
  const ParamStore &params() const { return params_; }
  std::size_t num_params() const { return params_.count(); }

  Outputs forward(Tape &tape, std::span<const V> p,
                  const data::PackedBatch &batch) const;
  // [node features, lap MLP(eigvecs, eigvals), rwse MLP(probs)], the input
  // of the first GNN layer.
  V encode_pes(Tape &tape, std::span<const V> p,
               const data::PackedBatch &batch) const;

 private:
  struct LinearIds {
    std::size_t w = 0;
    std::size_t b = 0;
    bool bias = true;
  };
  struct LayerIds {
    std::size_t eps = 0;
    std::vector<LinearIds> mlp;
    LinearIds edge;
    std::size_t gcn_w = 0;
  };

  std::vector<LinearIds> add_mlp(const std::string &prefix, int in,
                                 std::span<const int> widths,
                                 std::mt19937_64 &rng);
  static std::vector<Linear> bind(std::span<const V> p,
                                  std::span<const LinearIds> ids);

  ModelConfig cfg_;
  ParamStore params_;
  std::vector<LinearIds> lap_enc_, rwse_enc_;
  std::vector<LayerIds> layers_;
  std::vector<LinearIds> graph_mlp_, node_mlp_;
  std::vector<std::vector<LinearIds>> heads_;
};

// ---- Checkpoints -------------------------------------------------------------

struct Checkpoint {
  std::string config_text;   // resolved run configuration
  std::string manifest_ref;  // manifest digest or path
  int epoch = 0;
  std::vector<Param> params;
};

/// Layout: "MMCKPT01", u32 format version, u64 payload length, payload,
/// 32-byte SHA-256 of the payload.
void save_checkpoint(const std::filesystem::path &path, const Checkpoint &c);
Checkpoint load_checkpoint(const std::filesystem::path &path);

/// Copies checkpoint tensors into the store; names and shapes must match.
void load_params(ParamStore &store, std::span<const Param> params);

}  // namespace molmix::gnn
