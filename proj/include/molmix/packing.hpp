// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace molmix::data {

struct PackCapacity {
  std::size_t max_nodes = 512;
  std::size_t max_edges = 1024;  // directed edges
  std::size_t max_graphs = 64;

  void validate() const;
};

struct GraphSize {
  std::size_t nodes = 0;
  std::size_t edges = 0;
};

struct Pack {
  std::vector<std::size_t> graphs;  // input indices
  std::size_t nodes = 0;
  std::size_t edges = 0;
};

struct PackingResult {
  std::vector<Pack> packs;
  std::vector<std::size_t> oversized;  // graphs that fit no pack alone
  std::size_t real_nodes = 0;

  // Σ (max_nodes - nodes) over packs.
  std::size_t node_padding(const PackCapacity &cap) const;
  // node_padding / (packs * max_nodes); 0 when there are no packs.
  double padding_fraction(const PackCapacity &cap) const;
};

enum class OversizePolicy {
  kSkip,
  kError,
};

/// First-fit decreasing by node count (ties by input index): each graph goes
/// to the first open pack with room for its nodes, edges and one more graph.
PackingResult pack_ffd(std::span<const GraphSize> sizes, const PackCapacity &cap,
                       OversizePolicy policy = OversizePolicy::kSkip);

/// Next-fit in input order; the baseline FFD is compared against.
PackingResult pack_in_order(std::span<const GraphSize> sizes,
                            const PackCapacity &cap,
                            OversizePolicy policy = OversizePolicy::kSkip);

}  // namespace molmix::data
