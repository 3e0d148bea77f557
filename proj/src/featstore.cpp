// SPDX-License-Identifier: Apache-2.0

#include "molmix/featstore.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "molmix/bytes.hpp"
#include "molmix/error.hpp"
#include "molmix/molparse.hpp"

namespace molmix::data {

std::vector<std::byte> serialize(const MolFeatures &m) {
  ByteWriter w;
  const auto &g = m.graph;
  w.put_matrix(g.node_features);
  w.put_matrix(g.edge_features);
  w.put<std::uint64_t>(g.edge_index.size());
  for (const auto &[s, d]: g.edge_index) {
    w.put<std::int32_t>(s);
    w.put<std::int32_t>(d);
  }
  w.put<std::uint64_t>(g.descriptors.size());
  for (const auto &[name, v]: g.descriptors) {
    w.put_string(name);
    w.put<double>(v);
  }
  w.put<std::int32_t>(m.pe.lap.k);
  w.put_vector(m.pe.lap.eigvals);
  w.put_matrix(m.pe.lap.eigvecs);
  w.put_vector(m.pe.rw.steps);
  w.put_matrix(m.pe.rw.probs);
  return w.take();
}

MolFeatures deserialize_features(std::span<const std::byte> bytes) {
  ByteReader r(bytes);
  MolFeatures m;
  auto &g = m.graph;
  g.node_features = r.get_matrix();
  g.edge_features = r.get_matrix();
  const auto edges = r.get<std::uint64_t>();
  if (edges > bytes.size()) {
    throw DataError("corrupted payload: edge count");
  }
  g.edge_index.reserve(edges);
  for (std::uint64_t e = 0; e < edges; ++e) {
    const auto s = r.get<std::int32_t>();
    const auto d = r.get<std::int32_t>();
    g.edge_index.emplace_back(s, d);
  }
  const auto nd = r.get<std::uint64_t>();
  if (nd > bytes.size()) {
    throw DataError("corrupted payload: descriptor count");
  }
  for (std::uint64_t i = 0; i < nd; ++i) {
    auto name = r.get_string();
    g.descriptors[std::move(name)] = r.get<double>();
  }
  m.pe.lap.k = r.get<std::int32_t>();
  m.pe.lap.eigvals = r.get_vector<double>();
  m.pe.lap.eigvecs = r.get_matrix();
  m.pe.rw.steps = r.get_vector<int>();
  m.pe.rw.probs = r.get_matrix();
  if (!r.done()) {
    throw DataError("corrupted payload: trailing bytes");
  }
  const std::size_t n = g.node_features.rows;
  if (g.edge_features.rows != g.edge_index.size() || m.pe.lap.eigvecs.rows != n
      || m.pe.rw.probs.rows != n) {
    throw DataError("corrupted payload: inconsistent shapes");
  }
  for (const auto &[s, d]: g.edge_index) {
    if (s < 0 || d < 0 || static_cast<std::size_t>(s) >= n
        || static_cast<std::size_t>(d) >= n) {
      throw DataError("corrupted payload: edge endpoint");
    }
  }
  return m;
}

void FeatStoreConfig::validate() const {
  features.validate();
  pe.validate();
  if (workers < 1) {
    throw ConfigError("featurization needs at least one worker");
  }
  if (batch_size == 0) {
    throw ConfigError("featurization batch size must be positive");
  }
}

std::string FeatStoreConfig::fingerprint() const {
  return "v" + std::to_string(version) + ";" + features.fingerprint() + ";"
         + pe.fingerprint();
}

MolFeatures featurize_molecule(const std::string &smiles,
                               const FeatStoreConfig &cfg) {
  const auto g = chem::parse_smiles(smiles);
  const auto canon = chem::permute_atoms(g, chem::canonical_order(g));
  MolFeatures m;
  m.graph = feat::featurize(canon, cfg.features);
  m.pe = pe::compute_pes(canon, cfg.pe);
  return m;
}

MolCache::MolCache(std::filesystem::path dir)
    : store_(std::move(dir), { 'M', 'M', 'M', 'O', 'L', 'C', 'A', 'C' },
             kFormatVersion) { }

std::string MolCache::make_key(const std::string &canonical_key,
                               const FeatStoreConfig &cfg) {
  return content_key(canonical_key, cfg.fingerprint());
}

std::optional<MolFeatures> MolCache::get(const std::string &key) const {
  auto bytes = store_.get(key);
  if (!bytes) {
    return std::nullopt;
  }
  try {
    return deserialize_features(*bytes);
  } catch (const DataError &) {
    ++undecodable_;
    return std::nullopt;
  }
}

void MolCache::put(const std::string &key, const MolFeatures &m) const {
  store_.put(key, serialize(m));
}

std::uint64_t MolCache::corrupted() const {
  return store_.corrupted() + undecodable_.load();
}

std::vector<MolFeatures> featurize_all(std::span<const std::string> keys,
                                       std::span<const std::string> smiles,
                                       const FeatStoreConfig &cfg,
                                       const MolCache *cache,
                                       FeaturizeStats *stats) {
  cfg.validate();
  if (keys.size() != smiles.size()) {
    throw ShapeError("featurize_all: keys and smiles differ in length");
  }
  const std::size_t n = smiles.size();
  std::vector<MolFeatures> out(n);
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  std::atomic<std::size_t> next_batch { 0 };
  std::atomic<std::size_t> featurized { 0 }, hits { 0 };
  const std::uint64_t corrupted_before = cache != nullptr ? cache->corrupted() : 0;

  std::mutex err_mu;
  std::exception_ptr error;

  auto worker = [&] {
    for (;;) {
      const std::size_t b = next_batch.fetch_add(1);
      if (b >= batches) {
        return;
      }
      {
        std::lock_guard lock(err_mu);
        if (error) {
          return;
        }
      }
      try {
        const std::size_t lo = b * cfg.batch_size;
        const std::size_t hi = std::min(n, lo + cfg.batch_size);
        for (std::size_t i = lo; i < hi; ++i) {
          std::string key;
          if (cache != nullptr) {
            key = MolCache::make_key(keys[i], cfg);
            if (auto hit = cache->get(key)) {
              out[i] = std::move(*hit);
              ++hits;
              continue;
            }
          }
          out[i] = featurize_molecule(smiles[i], cfg);
          ++featurized;
          if (cache != nullptr) {
            cache->put(key, out[i]);
          }
        }
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!error) {
          error = std::current_exception();
        }
        return;
      }
    }
  };

  const int threads = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(cfg.workers),
                            std::max<std::size_t>(batches, 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back(worker);
    }
  }
  if (error) {
    std::rethrow_exception(error);
  }
  if (stats != nullptr) {
    stats->featurized = featurized.load();
    stats->cache_hits = hits.load();
    stats->corrupted = cache != nullptr
                           ? static_cast<std::size_t>(cache->corrupted()
                                                      - corrupted_before)
                           : 0;
  }
  return out;
}

}  // namespace molmix::data
