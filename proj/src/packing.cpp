// SPDX-License-Identifier: Apache-2.0

#include "molmix/packing.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "molmix/error.hpp"

namespace molmix::data {
namespace {

bool fits_alone(const GraphSize &s, const PackCapacity &cap) {
  return s.nodes <= cap.max_nodes && s.edges <= cap.max_edges;
}

bool fits(const Pack &p, const GraphSize &s, const PackCapacity &cap) {
  return p.nodes + s.nodes <= cap.max_nodes && p.edges + s.edges <= cap.max_edges
         && p.graphs.size() < cap.max_graphs;
}

void add(Pack &p, std::size_t i, const GraphSize &s) {
  p.graphs.push_back(i);
  p.nodes += s.nodes;
  p.edges += s.edges;
}

// Returns false (after recording or throwing) if graph i cannot be packed.
bool admit(std::size_t i, const GraphSize &s, const PackCapacity &cap,
           OversizePolicy policy, PackingResult &r) {
  if (fits_alone(s, cap)) {
    return true;
  }
  if (policy == OversizePolicy::kError) {
    throw DataError("graph " + std::to_string(i) + " with "
                    + std::to_string(s.nodes) + " nodes and "
                    + std::to_string(s.edges)
                    + " edges exceeds the pack capacity");
  }
  r.oversized.push_back(i);
  return false;
}

}  // namespace

void PackCapacity::validate() const {
  if (max_nodes == 0 || max_edges == 0 || max_graphs == 0) {
    throw ConfigError("pack capacities must be positive");
  }
}

std::size_t PackingResult::node_padding(const PackCapacity &cap) const {
  std::size_t pad = 0;
  for (const auto &p: packs) {
    pad += cap.max_nodes - p.nodes;
  }
  return pad;
}

double PackingResult::padding_fraction(const PackCapacity &cap) const {
  if (packs.empty()) {
    return 0.0;
  }
  return static_cast<double>(node_padding(cap))
         / static_cast<double>(packs.size() * cap.max_nodes);
}

PackingResult pack_ffd(std::span<const GraphSize> sizes, const PackCapacity &cap,
                       OversizePolicy policy) {
  cap.validate();
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sizes[a].nodes > sizes[b].nodes;
  });
  PackingResult r;
  for (std::size_t i: order) {
    const auto &s = sizes[i];
    if (!admit(i, s, cap, policy, r)) {
      continue;
    }
    r.real_nodes += s.nodes;
    auto it = std::find_if(r.packs.begin(), r.packs.end(),
                           [&](const Pack &p) { return fits(p, s, cap); });
    if (it == r.packs.end()) {
      r.packs.emplace_back();
      it = std::prev(r.packs.end());
    }
    add(*it, i, s);
  }
  std::sort(r.oversized.begin(), r.oversized.end());
  return r;
}

PackingResult pack_in_order(std::span<const GraphSize> sizes,
                            const PackCapacity &cap, OversizePolicy policy) {
  cap.validate();
  PackingResult r;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const auto &s = sizes[i];
    if (!admit(i, s, cap, policy, r)) {
      continue;
    }
    r.real_nodes += s.nodes;
    if (r.packs.empty() || !fits(r.packs.back(), s, cap)) {
      r.packs.emplace_back();
    }
    add(r.packs.back(), i, s);
  }
  return r;
}

}  // namespace molmix::data
