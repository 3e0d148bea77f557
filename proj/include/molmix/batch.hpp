// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "molmix/featstore.hpp"
#include "molmix/labels.hpp"
#include "molmix/matrix.hpp"
#include "molmix/packing.hpp"
#include "molmix/splits.hpp"
#include "molmix/task.hpp"

namespace molmix::data {

/// Targets of one task over the joint molecule list.
struct TaskData {
  TaskSpec spec;
  std::size_t dataset = 0;  // index into JointDataset::datasets
  Matrix graph;             // graph level: [molecules x labels], NaN = missing
  std::vector<Matrix> node;  // node level: per molecule [atoms x labels]
  // One entry per label for regression tasks, kNone otherwise. Fitted on the
  // dataset's train rows.
  std::vector<feat::NormParams> norms;
};

/// Union of several datasets keyed by canonical key.
struct JointDataset {
  std::vector<std::string> datasets;
  std::vector<std::string> keys;
  std::vector<std::string> smiles;
  std::vector<int> num_atoms;
  // tags[d][m]: split of molecule m within dataset d; nullopt if d does not
  // contain the molecule.
  std::vector<std::vector<std::optional<SplitTag>>> tags;
  std::vector<TaskData> tasks;
  std::vector<MolFeatures> features;  // empty until attached

  std::size_t size() const { return keys.size(); }
  // Molecules tagged `tag` by at least one dataset, ascending.
  std::vector<std::size_t> molecules(SplitTag tag) const;
  // Molecules tagged `tag` by dataset d, ascending.
  std::vector<std::size_t> molecules(SplitTag tag, std::size_t d) const;
  std::size_t dataset_index(const std::string &name) const;
  std::vector<feat::NormParams> all_norms() const;
};

/// Builds the union table. Hybrid tasks with thresholds are binned here and
/// regression targets are normalized with statistics fitted on train rows.
JointDataset build_joint(std::span<const LabelTable *const> tables,
                         const std::map<std::string, SplitAssignment> &splits,
                         std::span<const TaskSpec> tasks);

/// Featurizes every molecule of the joint table (see featurize_all).
void attach_features(JointDataset &ds, const FeatStoreConfig &cfg,
                     const MolCache *cache = nullptr,
                     FeaturizeStats *stats = nullptr);

/// A fixed-capacity batch. Node rows past num_nodes are padding with zero
/// features; graph slots past num_graphs are empty. Only real edges are
/// stored.
struct PackedBatch {
  PackCapacity cap;
  std::size_t num_graphs = 0;
  std::size_t num_nodes = 0;

  Matrix node_features;               // [max_nodes x node_dim]
  Matrix edge_features;               // [edges x edge_dim]
  std::vector<int> edge_src;          // message source node
  std::vector<int> edge_dst;          // message target node
  std::vector<int> node_graph;        // [max_nodes]; padding -> last slot
  std::vector<double> node_mask;      // [max_nodes], 1 for real nodes
  std::vector<double> graph_mask;     // [max_graphs], 1 for real graphs
  std::vector<double> graph_nodes;    // [max_graphs], atoms per graph
  std::vector<std::size_t> molecules;  // joint index per real graph
  std::vector<std::uint32_t> dataset_bits;  // per real graph

  Matrix lap_vecs;  // [max_nodes x k]
  Matrix lap_vals;  // [max_nodes x k], eigenvalues repeated per node
  Matrix rwse;      // [max_nodes x steps]

  // Per task: [max_graphs x labels] or [max_nodes x labels]; NaN where the
  // label is missing, belongs to another split, or is padding.
  std::vector<Matrix> targets;

  std::size_t max_nodes() const { return cap.max_nodes; }
  std::size_t max_graphs() const { return cap.max_graphs; }
  std::size_t num_edges() const { return edge_src.size(); }
};

/// Assembles the given molecules into one batch. A label is kept only if the
/// task's dataset tags the molecule with `split`.
PackedBatch make_batch(const JointDataset &ds, std::span<const std::size_t> mols,
                       SplitTag split, const PackCapacity &cap);

struct EpochConfig {
  PackCapacity cap;
  std::uint64_t seed = 0;
  bool shuffle = true;
  std::size_t prefetch = 2;
  // Keep probability per dataset name in [0, 1]; a molecule survives with
  // the largest weight among the datasets that tag it. Unlisted = 1.
  std::map<std::string, double> sampling_weights;
  OversizePolicy oversize = OversizePolicy::kSkip;
};

/// Molecule lists of each pack for one epoch; deterministic in
/// (seed, epoch).
std::vector<std::vector<std::size_t>> plan_epoch(const JointDataset &ds,
                                                 SplitTag split,
                                                 const EpochConfig &cfg,
                                                 int epoch);

/// Streams the packs of one epoch, built by a producer thread that stays at
/// most `prefetch` batches ahead.
class EpochIterator {
 public:
  EpochIterator(const JointDataset &ds, SplitTag split, EpochConfig cfg,
                int epoch);
  ~EpochIterator();
  EpochIterator(const EpochIterator &) = delete;
  EpochIterator &operator=(const EpochIterator &) = delete;

  std::optional<PackedBatch> next();
  std::size_t num_packs() const { return plan_.size(); }

 private:
  void produce();

  const JointDataset &ds_;
  SplitTag split_;
  EpochConfig cfg_;
  std::vector<std::vector<std::size_t>> plan_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<PackedBatch> queue_;
  std::size_t consumed_ = 0;
  bool stop_ = false;
  bool done_ = false;
  std::exception_ptr error_;
  std::thread producer_;
};

}  // namespace molmix::data
