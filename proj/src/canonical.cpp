// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "molmix/molparse.hpp"

namespace molmix::chem {
namespace {

// Leaf budget for the individualization search, per component.
constexpr int kSearchBudget = 20000;

struct Neighbor {
  int atom;
  int order;
};

struct Component {
  std::vector<int> atoms;  // original indices
  std::vector<Atom> props;
  std::vector<std::vector<Neighbor>> adj;  // local indices
};

std::vector<Component> split_components(const MolGraph &g) {
  const auto comp = connected_components(g);
  const int ncomp =
      comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
  std::vector<Component> out(ncomp);
  std::vector<int> local(g.num_atoms());
  for (int i = 0; i < g.num_atoms(); ++i) {
    auto &c = out[comp[i]];
    local[i] = static_cast<int>(c.atoms.size());
    c.atoms.push_back(i);
    c.props.push_back(g.atoms[i]);
  }
  for (auto &c: out) {
    c.adj.resize(c.atoms.size());
  }
  for (const auto &bd: g.bonds) {
    auto &c = out[comp[bd.begin]];
    const int o = static_cast<int>(bd.order);
    c.adj[local[bd.begin]].push_back({ local[bd.end], o });
    c.adj[local[bd.end]].push_back({ local[bd.begin], o });
  }
  return out;
}

// Ranks are "number of atoms with a strictly smaller signature".
template <class Sig>
std::vector<int> ranks_from(const std::vector<Sig> &sigs) {
  const int n = static_cast<int>(sigs.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](int a, int b) { return sigs[a] < sigs[b]; });
  std::vector<int> rank(n, 0);
  for (int k = 1; k < n; ++k) {
    rank[idx[k]] = sigs[idx[k]] == sigs[idx[k - 1]] ? rank[idx[k - 1]] : k;
  }
  return rank;
}

int count_classes(const std::vector<int> &rank) {
  std::vector<int> r = rank;
  std::sort(r.begin(), r.end());
  return static_cast<int>(std::unique(r.begin(), r.end()) - r.begin());
}

class Canonicalizer {
 public:
  explicit Canonicalizer(const Component &c): c_(c) { }

  // Returns (key, canonical order as local indices).
  std::pair<std::string, std::vector<int>> run() {
    using Init = std::tuple<int, int, int, int, int>;
    std::vector<Init> init;
    for (const auto &a: c_.props) {
      init.emplace_back(a.atomic_number, a.formal_charge, a.degree,
                        a.implicit_h, a.aromatic ? 1 : 0);
    }
    search(ranks_from(init));
    std::vector<int> order(best_rank_.size());
    for (int i = 0; i < static_cast<int>(best_rank_.size()); ++i) {
      order[best_rank_[i]] = i;
    }
    return { best_key_, order };
  }

 private:
  std::vector<int> refine(std::vector<int> rank) const {
    const int n = static_cast<int>(rank.size());
    int classes = count_classes(rank);
    while (classes < n) {
      using Sig = std::pair<int, std::vector<std::pair<int, int>>>;
      std::vector<Sig> sigs(n);
      for (int v = 0; v < n; ++v) {
        sigs[v].first = rank[v];
        for (const auto &nb: c_.adj[v]) {
          sigs[v].second.emplace_back(rank[nb.atom], nb.order);
        }
        std::sort(sigs[v].second.begin(), sigs[v].second.end());
      }
      auto next = ranks_from(sigs);
      const int next_classes = count_classes(next);
      rank = std::move(next);
      if (next_classes == classes) {
        break;
      }
      classes = next_classes;
    }
    return rank;
  }

  std::string serialize(const std::vector<int> &rank) const {
    const int n = static_cast<int>(rank.size());
    std::vector<int> order(n);
    for (int v = 0; v < n; ++v) {
      order[rank[v]] = v;
    }
    std::string key;
    for (int r = 0; r < n; ++r) {
      const Atom &a = c_.props[order[r]];
      key += std::to_string(a.atomic_number);
      key += a.aromatic ? 'a' : 'A';
      key += std::to_string(a.formal_charge);
      key += 'h';
      key += std::to_string(a.implicit_h);
      key += ';';
    }
    std::vector<std::tuple<int, int, int>> edges;
    for (int v = 0; v < n; ++v) {
      for (const auto &nb: c_.adj[v]) {
        if (rank[v] < rank[nb.atom]) {
          edges.emplace_back(rank[v], rank[nb.atom], nb.order);
        }
      }
    }
    std::sort(edges.begin(), edges.end());
    key += '|';
    for (const auto &[a, b, o]: edges) {
      key += std::to_string(a);
      key += '-';
      key += std::to_string(b);
      key += ':';
      key += std::to_string(o);
      key += ';';
    }
    return key;
  }

  std::vector<std::pair<int, int>> neighborhood(int v) const {
    std::vector<std::pair<int, int>> out;
    for (const auto &nb: c_.adj[v]) {
      out.emplace_back(nb.atom, nb.order);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  void search(std::vector<int> rank) {
    if (leaves_ >= kSearchBudget) {
      return;
    }
    rank = refine(std::move(rank));
    const int n = static_cast<int>(rank.size());

    // First (lowest-rank) non-singleton cell.
    std::vector<int> count(n, 0);
    for (int r: rank) {
      ++count[r];
    }
    int target = -1;
    for (int r = 0; r < n; ++r) {
      if (count[r] > 1) {
        target = r;
        break;
      }
    }
    if (target < 0) {
      ++leaves_;
      std::string key = serialize(rank);
      if (best_rank_.empty() || key < best_key_) {
        best_key_ = std::move(key);
        best_rank_ = rank;
      }
      return;
    }

    // Atoms with identical neighborhoods are exchanged by an automorphism;
    // trying one of them is enough.
    std::vector<std::vector<std::pair<int, int>>> tried;
    for (int v = 0; v < n; ++v) {
      if (rank[v] != target) {
        continue;
      }
      auto nbh = neighborhood(v);
      if (std::find(tried.begin(), tried.end(), nbh) != tried.end()) {
        continue;
      }
      tried.push_back(std::move(nbh));
      std::vector<int> next = rank;
      for (int u = 0; u < n; ++u) {
        if (u != v && rank[u] == target) {
          next[u] = target + 1;
        }
      }
      search(std::move(next));
    }
  }

  const Component &c_;
  std::string best_key_;
  std::vector<int> best_rank_;
  int leaves_ = 0;
};

struct ComponentResult {
  std::string key;
  std::vector<int> order;  // original atom indices
};

std::vector<ComponentResult> canonicalize(const MolGraph &g) {
  std::vector<ComponentResult> out;
  for (const auto &c: split_components(g)) {
    auto [key, local_order] = Canonicalizer(c).run();
    ComponentResult res { std::move(key), {} };
    for (int l: local_order) {
      res.order.push_back(c.atoms[l]);
    }
    out.push_back(std::move(res));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ComponentResult &a, const ComponentResult &b) {
                     return a.key < b.key;
                   });
  return out;
}

}  // namespace

CanonicalForm canonical_form(const MolGraph &g) {
  CanonicalForm out;
  for (auto &c: canonicalize(g)) {
    if (!out.key.empty()) {
      out.key += '.';
    }
    out.key += c.key;
    out.order.insert(out.order.end(), c.order.begin(), c.order.end());
  }
  return out;
}

std::vector<int> canonical_order(const MolGraph &g) {
  std::vector<int> order;
  order.reserve(g.atoms.size());
  for (const auto &c: canonicalize(g)) {
    order.insert(order.end(), c.order.begin(), c.order.end());
  }
  return order;
}

std::string canonical_key(const MolGraph &g) {
  std::string key;
  for (const auto &c: canonicalize(g)) {
    if (!key.empty()) {
      key += '.';
    }
    key += c.key;
  }
  return key;
}

namespace {

class SmilesWriter {
 public:
  SmilesWriter(const MolGraph &g, std::span<const int> priority)
      : g_(g), priority_(priority.begin(), priority.end()),
        adj_(g.atoms.size()), visited_(g.atoms.size(), false),
        ring_open_(g.atoms.size()), ring_close_(g.atoms.size()),
        dfs_index_(g.atoms.size(), -1) {
    for (int b = 0; b < g.num_bonds(); ++b) {
      adj_[g.bonds[b].begin].push_back(b);
      adj_[g.bonds[b].end].push_back(b);
    }
    for (int v = 0; v < g.num_atoms(); ++v) {
      std::sort(adj_[v].begin(), adj_[v].end(), [&](int x, int y) {
        return priority_[other(x, v)] < priority_[other(y, v)];
      });
    }
  }

  std::string run() {
    const int n = g_.num_atoms();
    std::vector<int> by_priority(n);
    std::iota(by_priority.begin(), by_priority.end(), 0);
    std::sort(by_priority.begin(), by_priority.end(),
              [&](int a, int b) { return priority_[a] < priority_[b]; });

    children_.assign(n, {});
    std::vector<bool> tree_bond(g_.num_bonds(), false);
    std::vector<int> roots;
    for (int s: by_priority) {
      if (!visited_[s]) {
        roots.push_back(s);
        discover(s, -1, tree_bond);
      }
    }
    // Non-tree bonds become ring closures: opened at the earlier atom.
    for (int b = 0; b < g_.num_bonds(); ++b) {
      if (tree_bond[b]) {
        continue;
      }
      const int a = g_.bonds[b].begin;
      const int c = g_.bonds[b].end;
      const bool a_first = dfs_index_[a] < dfs_index_[c];
      ring_open_[a_first ? a : c].push_back(b);
      ring_close_[a_first ? c : a].push_back(b);
    }

    std::string out;
    for (int r: roots) {
      if (!out.empty()) {
        out += '.';
      }
      emit(r, out);
    }
    return out;
  }

 private:
  int other(int bond, int self) const {
    const Bond &bd = g_.bonds[bond];
    return bd.begin == self ? bd.end : bd.begin;
  }

  void discover(int v, int parent_bond, std::vector<bool> &tree_bond) {
    visited_[v] = true;
    dfs_index_[v] = counter_++;
    for (int b: adj_[v]) {
      if (b == parent_bond) {
        continue;
      }
      const int w = other(b, v);
      if (!visited_[w]) {
        tree_bond[b] = true;
        children_[v].push_back(b);
        discover(w, b, tree_bond);
      }
    }
  }

  static void bond_symbol(BondOrder order, std::string &out) {
    switch (order) {
    case BondOrder::kSingle: out += '-'; break;
    case BondOrder::kDouble: out += '='; break;
    case BondOrder::kTriple: out += '#'; break;
    case BondOrder::kAromatic: out += ':'; break;
    }
  }

  static void ring_label(int digit, std::string &out) {
    if (digit < 10) {
      out += static_cast<char>('0' + digit);
    } else {
      out += '%';
      out += std::to_string(digit);
    }
  }

  void atom_text(int v, std::string &out) const {
    const Atom &a = g_.atoms[v];
    out += '[';
    std::string sym(element_symbol(a.atomic_number));
    if (a.aromatic) {
      sym[0] = static_cast<char>(std::tolower(sym[0]));
    }
    out += sym;
    if (a.implicit_h > 0) {
      out += 'H';
      if (a.implicit_h > 1) {
        out += std::to_string(a.implicit_h);
      }
    }
    if (a.formal_charge != 0) {
      out += a.formal_charge > 0 ? '+' : '-';
      const int mag = std::abs(a.formal_charge);
      if (mag > 1) {
        out += std::to_string(mag);
      }
    }
    out += ']';
  }

  void emit(int v, std::string &out) {
    atom_text(v, out);
    for (int b: ring_close_[v]) {
      bond_symbol(g_.bonds[b].order, out);
      ring_label(digit_of_[b], out);
      free_digits_.push_back(digit_of_[b]);
      std::sort(free_digits_.begin(), free_digits_.end());
    }
    for (int b: ring_open_[v]) {
      int digit;
      if (!free_digits_.empty()) {
        digit = free_digits_.front();
        free_digits_.erase(free_digits_.begin());
      } else {
        digit = next_digit_++;
      }
      digit_of_[b] = digit;
      ring_label(digit, out);
    }
    const auto &kids = children_[v];
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const bool last = k + 1 == kids.size();
      if (!last) {
        out += '(';
      }
      bond_symbol(g_.bonds[kids[k]].order, out);
      emit(other(kids[k], v), out);
      if (!last) {
        out += ')';
      }
    }
  }

  const MolGraph &g_;
  std::vector<int> priority_;
  std::vector<std::vector<int>> adj_;
  std::vector<bool> visited_;
  std::vector<std::vector<int>> ring_open_;
  std::vector<std::vector<int>> ring_close_;
  std::vector<std::vector<int>> children_;
  std::vector<int> dfs_index_;
  int counter_ = 0;
  std::map<int, int> digit_of_;
  std::vector<int> free_digits_;
  int next_digit_ = 1;
};

}  // namespace

std::string write_smiles(const MolGraph &g, std::span<const int> priority) {
  if (static_cast<int>(priority.size()) != g.num_atoms()) {
    throw ShapeError("write_smiles: priority size mismatch");
  }
  return SmilesWriter(g, priority).run();
}

std::string write_smiles(const MolGraph &g) {
  std::vector<int> priority(g.atoms.size());
  std::iota(priority.begin(), priority.end(), 0);
  return write_smiles(g, priority);
}

}  // namespace molmix::chem
