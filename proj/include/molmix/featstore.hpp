// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "molmix/blob_store.hpp"
#include "molmix/featurize.hpp"
#include "molmix/posenc.hpp"

namespace molmix::data {

/// Everything the model consumes for one molecule, in canonical atom order.
struct MolFeatures {
  feat::FeaturizedGraph graph;
  pe::PeResult pe;

  std::size_t num_atoms() const { return graph.node_features.rows; }
  std::size_t num_edges() const { return graph.edge_index.size(); }
  bool operator==(const MolFeatures &) const = default;
};

std::vector<std::byte> serialize(const MolFeatures &m);
MolFeatures deserialize_features(std::span<const std::byte> bytes);

struct FeatStoreConfig {
  feat::FeatureConfig features;
  pe::PeConfig pe;
  std::uint32_t version = 1;  // bump to invalidate cached entries
  int workers = 1;
  std::size_t batch_size = 1000;

  void validate() const;
  // Feature, PE and version settings; workers and batch size excluded.
  std::string fingerprint() const;
};

/// Featurizes one molecule after reordering its atoms canonically.
MolFeatures featurize_molecule(const std::string &smiles,
                               const FeatStoreConfig &cfg);

/// One file per molecule under `<dir>/<2-hex-prefix>/<keyhash>.bin`.
class MolCache {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  explicit MolCache(std::filesystem::path dir);

  static std::string make_key(const std::string &canonical_key,
                              const FeatStoreConfig &cfg);
  // nullopt on miss or unreadable entry.
  std::optional<MolFeatures> get(const std::string &key) const;
  void put(const std::string &key, const MolFeatures &m) const;
  const BlobStore &store() const { return store_; }
  // Entries that failed the checksum or did not decode.
  std::uint64_t corrupted() const;

 private:
  BlobStore store_;
  mutable std::atomic<std::uint64_t> undecodable_ { 0 };
};

struct FeaturizeStats {
  std::size_t featurized = 0;
  std::size_t cache_hits = 0;
  std::size_t corrupted = 0;  // unreadable entries that were recomputed
};

/// Featurizes `smiles[i]` (whose canonical key is `keys[i]`) into slot i.
/// Work is split into batches of cfg.batch_size handed to cfg.workers
/// threads; results do not depend on the worker count.
std::vector<MolFeatures> featurize_all(std::span<const std::string> keys,
                                       std::span<const std::string> smiles,
                                       const FeatStoreConfig &cfg,
                                       const MolCache *cache = nullptr,
                                       FeaturizeStats *stats = nullptr);

}  // namespace molmix::data
