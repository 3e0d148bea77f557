// SPDX-License-Identifier: Apache-2.0

#include "molmix/molparse.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <utility>

namespace molmix::chem {

ParseError::ParseError(Kind kind, std::size_t position, const std::string &what)
    : DataError(what + " (at position " + std::to_string(position) + ")"),
      kind_(kind), position_(position) { }

namespace {

struct ElementInfo {
  int z;
  std::string_view symbol;
  double mass;
};

// Standard atomic weights (IUPAC abridged).
constexpr std::array kElements = {
  ElementInfo { 1, "H", 1.008 },    ElementInfo { 3, "Li", 6.94 },
  ElementInfo { 5, "B", 10.81 },    ElementInfo { 6, "C", 12.011 },
  ElementInfo { 7, "N", 14.007 },   ElementInfo { 8, "O", 15.999 },
  ElementInfo { 9, "F", 18.998 },   ElementInfo { 11, "Na", 22.990 },
  ElementInfo { 12, "Mg", 24.305 }, ElementInfo { 13, "Al", 26.982 },
  ElementInfo { 14, "Si", 28.085 }, ElementInfo { 15, "P", 30.974 },
  ElementInfo { 16, "S", 32.06 },   ElementInfo { 17, "Cl", 35.45 },
  ElementInfo { 19, "K", 39.098 },  ElementInfo { 20, "Ca", 40.078 },
  ElementInfo { 26, "Fe", 55.845 }, ElementInfo { 29, "Cu", 63.546 },
  ElementInfo { 30, "Zn", 65.38 },  ElementInfo { 32, "Ge", 72.630 },
  ElementInfo { 33, "As", 74.922 }, ElementInfo { 34, "Se", 78.971 },
  ElementInfo { 35, "Br", 79.904 }, ElementInfo { 50, "Sn", 118.71 },
  ElementInfo { 52, "Te", 127.60 }, ElementInfo { 53, "I", 126.904 },
};

constexpr std::array kValB { 3 };
constexpr std::array kValC { 4 };
constexpr std::array kValN { 3 };
constexpr std::array kValO { 2 };
constexpr std::array kValP { 3, 5 };
constexpr std::array kValS { 2, 4, 6 };
constexpr std::array kValHalogen { 1 };

const ElementInfo *find_element(int z) {
  for (const auto &e: kElements) {
    if (e.z == z) {
      return &e;
    }
  }
  return nullptr;
}

bool aromatic_allowed(int z) {
  switch (z) {
  case 5:
  case 6:
  case 7:
  case 8:
  case 15:
  case 16:
  case 33:
  case 34:
  case 52:
    return true;
  default:
    return false;
  }
}

struct RawAtom {
  Atom atom;
  bool bracketed = false;
  int explicit_h = 0;
  std::size_t position = 0;
};

class SmilesParser {
 public:
  explicit SmilesParser(std::string_view text): text_(text) { }

  MolGraph run();

 private:
  struct RingOpen {
    int atom;
    std::optional<BondOrder> order;
    std::size_t position;
  };

  [[noreturn]] void fail(ParseError::Kind kind, std::size_t pos,
                         const std::string &msg) const {
    throw ParseError(kind, pos, msg);
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }

  void parse_bracket_atom();
  void parse_organic_atom();
  void parse_ring_closure();
  void add_atom(RawAtom raw);
  void add_bond(int a, int b, BondOrder order, std::size_t pos);
  BondOrder default_order(int a, int b) const;

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<RawAtom> atoms_;
  std::vector<Bond> bonds_;
  std::vector<std::size_t> bond_pos_;
  std::map<int, RingOpen> rings_;
  std::vector<int> branch_stack_;
  int prev_ = -1;
  std::optional<BondOrder> pending_;
  std::size_t pending_pos_ = 0;
};

void SmilesParser::add_bond(int a, int b, BondOrder order, std::size_t pos) {
  if (a == b) {
    fail(ParseError::Kind::kSyntax, pos, "bond from an atom to itself");
  }
  for (const auto &bd: bonds_) {
    if ((bd.begin == a && bd.end == b) || (bd.begin == b && bd.end == a)) {
      fail(ParseError::Kind::kSyntax, pos, "duplicate bond between atoms");
    }
  }
  bonds_.push_back(Bond { a, b, order, false });
  bond_pos_.push_back(pos);
}

BondOrder SmilesParser::default_order(int a, int b) const {
  return atoms_[a].atom.aromatic && atoms_[b].atom.aromatic
             ? BondOrder::kAromatic
             : BondOrder::kSingle;
}

void SmilesParser::add_atom(RawAtom raw) {
  const int idx = static_cast<int>(atoms_.size());
  atoms_.push_back(raw);
  if (prev_ >= 0) {
    const BondOrder order = pending_ ? *pending_ : default_order(prev_, idx);
    add_bond(prev_, idx, order, pending_ ? pending_pos_ : raw.position);
  }
  pending_.reset();
  prev_ = idx;
}

void SmilesParser::parse_organic_atom() {
  const std::size_t start = pos_;
  const char c = peek();
  RawAtom raw;
  raw.position = start;
  int z = 0;
  bool aromatic = false;
  if (c == 'C' && peek(1) == 'l') {
    z = 17;
    pos_ += 2;
  } else if (c == 'B' && peek(1) == 'r') {
    z = 35;
    pos_ += 2;
  } else {
    switch (c) {
    case 'B': z = 5; break;
    case 'C': z = 6; break;
    case 'N': z = 7; break;
    case 'O': z = 8; break;
    case 'P': z = 15; break;
    case 'S': z = 16; break;
    case 'F': z = 9; break;
    case 'I': z = 53; break;
    case 'b': z = 5; aromatic = true; break;
    case 'c': z = 6; aromatic = true; break;
    case 'n': z = 7; aromatic = true; break;
    case 'o': z = 8; aromatic = true; break;
    case 'p': z = 15; aromatic = true; break;
    case 's': z = 16; aromatic = true; break;
    default:
      if (std::isalpha(static_cast<unsigned char>(c))) {
        fail(ParseError::Kind::kUnsupportedElement, start,
             std::string("element '") + c
                 + "' must be bracketed or is unsupported");
      }
      fail(ParseError::Kind::kSyntax, start,
           std::string("unexpected character '") + c + "'");
    }
    ++pos_;
  }
  raw.atom.atomic_number = z;
  raw.atom.aromatic = aromatic;
  add_atom(raw);
}

void SmilesParser::parse_bracket_atom() {
  const std::size_t start = pos_;
  ++pos_;  // '['
  if (std::isdigit(static_cast<unsigned char>(peek()))) {
    fail(ParseError::Kind::kSyntax, pos_, "isotopes are not supported");
  }
  if (peek() == '*') {
    fail(ParseError::Kind::kUnsupportedElement, pos_,
         "wildcard atoms are not supported");
  }

  RawAtom raw;
  raw.bracketed = true;
  raw.position = start;

  // Element symbol: aromatic two-letter forms first, then uppercase forms.
  int z = 0;
  bool aromatic = false;
  const char c0 = peek();
  const char c1 = peek(1);
  if (std::islower(static_cast<unsigned char>(c0))) {
    if ((c0 == 's' && c1 == 'e') || (c0 == 'a' && c1 == 's')
        || (c0 == 't' && c1 == 'e')) {
      const char sym[3] = { static_cast<char>(std::toupper(c0)), c1, '\0' };
      z = atomic_number(sym);
      pos_ += 2;
    } else {
      const char sym[2] = { static_cast<char>(std::toupper(c0)), '\0' };
      z = atomic_number(sym);
      pos_ += 1;
    }
    aromatic = true;
    if (z == 0 || !aromatic_allowed(z)) {
      fail(ParseError::Kind::kUnsupportedElement, start + 1,
           "unsupported aromatic element");
    }
  } else if (std::isupper(static_cast<unsigned char>(c0))) {
    if (std::islower(static_cast<unsigned char>(c1))) {
      const char sym[3] = { c0, c1, '\0' };
      z = atomic_number(sym);
      if (z != 0) {
        pos_ += 2;
      }
    }
    if (z == 0) {
      const char sym[2] = { c0, '\0' };
      z = atomic_number(sym);
      if (z == 0) {
        fail(ParseError::Kind::kUnsupportedElement, start + 1,
             "unsupported element");
      }
      pos_ += 1;
    }
  } else {
    fail(ParseError::Kind::kSyntax, pos_, "expected element symbol");
  }

  // Chirality: '@', '@@', or '@' followed by a class tag like TH1 / AL2.
  if (peek() == '@') {
    while (peek() == '@') {
      ++pos_;
    }
    if (std::isupper(static_cast<unsigned char>(peek()))
        && std::isupper(static_cast<unsigned char>(peek(1)))) {
      pos_ += 2;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        ++pos_;
      }
    }
  }

  if (peek() == 'H') {
    ++pos_;
    int h = 1;
    if (std::isdigit(static_cast<unsigned char>(peek()))) {
      h = peek() - '0';
      ++pos_;
    }
    raw.explicit_h = h;
  }

  if (peek() == '+' || peek() == '-') {
    const char sign = peek();
    int magnitude = 0;
    while (peek() == sign) {
      ++magnitude;
      ++pos_;
    }
    if (magnitude == 1 && std::isdigit(static_cast<unsigned char>(peek()))) {
      magnitude = 0;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        magnitude = magnitude * 10 + (peek() - '0');
        ++pos_;
      }
    }
    raw.atom.formal_charge = sign == '+' ? magnitude : -magnitude;
  }

  if (peek() == ':') {
    ++pos_;
    if (!std::isdigit(static_cast<unsigned char>(peek()))) {
      fail(ParseError::Kind::kSyntax, pos_, "expected atom class digits");
    }
    while (std::isdigit(static_cast<unsigned char>(peek()))) {
      ++pos_;
    }
  }

  if (peek() != ']') {
    fail(ParseError::Kind::kSyntax, pos_, "expected ']'");
  }
  ++pos_;

  raw.atom.atomic_number = z;
  raw.atom.aromatic = aromatic;
  add_atom(raw);
}

void SmilesParser::parse_ring_closure() {
  const std::size_t start = pos_;
  int number = 0;
  if (peek() == '%') {
    ++pos_;
    if (!std::isdigit(static_cast<unsigned char>(peek()))
        || !std::isdigit(static_cast<unsigned char>(peek(1)))) {
      fail(ParseError::Kind::kSyntax, start, "'%' must be followed by 2 digits");
    }
    number = (peek() - '0') * 10 + (peek(1) - '0');
    pos_ += 2;
  } else {
    number = peek() - '0';
    ++pos_;
  }
  if (prev_ < 0) {
    fail(ParseError::Kind::kSyntax, start, "ring closure without an atom");
  }

  auto it = rings_.find(number);
  if (it == rings_.end()) {
    rings_.emplace(number, RingOpen { prev_, pending_, start });
    pending_.reset();
    return;
  }

  const RingOpen open = it->second;
  rings_.erase(it);
  BondOrder order = default_order(open.atom, prev_);
  if (open.order && pending_ && *open.order != *pending_) {
    fail(ParseError::Kind::kSyntax, start, "conflicting ring-closure bonds");
  }
  if (open.order) {
    order = *open.order;
  } else if (pending_) {
    order = *pending_;
  }
  add_bond(open.atom, prev_, order, start);
  pending_.reset();
}

MolGraph SmilesParser::run() {
  if (text_.empty()) {
    fail(ParseError::Kind::kSyntax, 0, "empty SMILES");
  }

  while (!at_end()) {
    const char c = peek();
    switch (c) {
    case '(':
      if (prev_ < 0 || pending_) {
        fail(ParseError::Kind::kSyntax, pos_, "misplaced '('");
      }
      branch_stack_.push_back(prev_);
      ++pos_;
      break;
    case ')':
      if (branch_stack_.empty() || pending_) {
        fail(ParseError::Kind::kSyntax, pos_, "misplaced ')'");
      }
      prev_ = branch_stack_.back();
      branch_stack_.pop_back();
      ++pos_;
      break;
    case '-':
    case '=':
    case '#':
    case ':':
    case '/':
    case '\\': {
      if (prev_ < 0 || pending_) {
        fail(ParseError::Kind::kSyntax, pos_, "misplaced bond symbol");
      }
      BondOrder order = BondOrder::kSingle;
      if (c == '=') {
        order = BondOrder::kDouble;
      } else if (c == '#') {
        order = BondOrder::kTriple;
      } else if (c == ':') {
        order = BondOrder::kAromatic;
      }
      pending_ = order;
      pending_pos_ = pos_;
      ++pos_;
      break;
    }
    case '.':
      if (prev_ < 0 || pending_) {
        fail(ParseError::Kind::kSyntax, pos_, "misplaced '.'");
      }
      prev_ = -1;
      ++pos_;
      break;
    case '[':
      parse_bracket_atom();
      break;
    case '%':
      parse_ring_closure();
      break;
    case '>':
      fail(ParseError::Kind::kSyntax, pos_, "reaction SMILES are not supported");
    case '*':
      fail(ParseError::Kind::kUnsupportedElement, pos_,
           "wildcard atoms are not supported");
    default:
      if (std::isdigit(static_cast<unsigned char>(c))) {
        parse_ring_closure();
      } else {
        parse_organic_atom();
      }
    }
  }

  if (pending_) {
    fail(ParseError::Kind::kSyntax, pending_pos_, "dangling bond symbol");
  }
  if (!branch_stack_.empty()) {
    fail(ParseError::Kind::kSyntax, text_.size(), "unclosed branch");
  }
  if (!rings_.empty()) {
    fail(ParseError::Kind::kUnmatchedRing, rings_.begin()->second.position,
         "unmatched ring closure " + std::to_string(rings_.begin()->first));
  }

  // Fold [H] atoms hanging off exactly one heavy atom into H counts.
  const int n_raw = static_cast<int>(atoms_.size());
  std::vector<std::vector<int>> incident(n_raw);
  for (int b = 0; b < static_cast<int>(bonds_.size()); ++b) {
    incident[bonds_[b].begin].push_back(b);
    incident[bonds_[b].end].push_back(b);
  }
  std::vector<bool> drop(n_raw, false);
  std::vector<int> folded_h(n_raw, 0);
  for (int i = 0; i < n_raw; ++i) {
    const RawAtom &ra = atoms_[i];
    if (ra.atom.atomic_number != 1 || !ra.bracketed || ra.explicit_h != 0
        || ra.atom.formal_charge != 0 || incident[i].size() != 1) {
      continue;
    }
    const Bond &bd = bonds_[incident[i][0]];
    const int other = bd.begin == i ? bd.end : bd.begin;
    if (atoms_[other].atom.atomic_number == 1
        || bd.order != BondOrder::kSingle) {
      continue;
    }
    drop[i] = true;
    ++folded_h[other];
  }

  std::vector<int> new_index(n_raw, -1);
  MolGraph g;
  std::vector<int> kept;
  for (int i = 0; i < n_raw; ++i) {
    if (!drop[i]) {
      new_index[i] = static_cast<int>(g.atoms.size());
      g.atoms.push_back(atoms_[i].atom);
      kept.push_back(i);
    }
  }
  for (const auto &bd: bonds_) {
    if (drop[bd.begin] || drop[bd.end]) {
      continue;
    }
    g.bonds.push_back(Bond { new_index[bd.begin], new_index[bd.end], bd.order,
                             false });
  }

  // Valence bookkeeping per kept atom.
  const int n = g.num_atoms();
  std::vector<double> order_sum(n, 0.0);
  std::vector<int> sigma_sum(n, 0);
  std::vector<int> n_aromatic(n, 0);
  for (const auto &bd: g.bonds) {
    for (int end: { bd.begin, bd.end }) {
      ++g.atoms[end].degree;
      if (bd.order == BondOrder::kAromatic) {
        ++n_aromatic[end];
        sigma_sum[end] += 1;
      } else {
        sigma_sum[end] += static_cast<int>(bd.order);
      }
      order_sum[end] += bond_order_value(bd.order);
    }
  }

  for (int i = 0; i < n; ++i) {
    const RawAtom &ra = atoms_[kept[i]];
    Atom &atom = g.atoms[i];
    const auto valences = default_valences(atom.atomic_number);
    const int extra_h = folded_h[kept[i]];
    if (ra.bracketed) {
      atom.implicit_h = ra.explicit_h + extra_h;
      if (!valences.empty()) {
        const int limit = valences.back() + std::abs(atom.formal_charge);
        if (sigma_sum[i] + atom.implicit_h > limit) {
          fail(ParseError::Kind::kValenceOverflow, ra.position,
               "valence exceeded for bracket atom");
        }
      }
      continue;
    }

    if (atom.aromatic) {
      if (sigma_sum[i] + extra_h > valences.back()) {
        fail(ParseError::Kind::kValenceOverflow, ra.position,
             "valence exceeded for aromatic atom");
      }
      const int total = static_cast<int>(std::ceil(order_sum[i] - 1e-9))
                        + extra_h;
      atom.implicit_h = std::max(0, valences.front() - total) + extra_h;
      continue;
    }

    const int total = static_cast<int>(std::ceil(order_sum[i] - 1e-9))
                      + extra_h;
    auto fit = std::find_if(valences.begin(), valences.end(),
                            [total](int v) { return v >= total; });
    if (fit == valences.end()) {
      fail(ParseError::Kind::kValenceOverflow, ra.position,
           "explicit bonds exceed maximum valence");
    }
    atom.implicit_h = (*fit - total) + extra_h;
  }

  assign_ring_membership(g);
  const auto comp = connected_components(g);
  g.num_components =
      comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
  return g;
}

}  // namespace

int atomic_number(std::string_view symbol) {
  for (const auto &e: kElements) {
    if (e.symbol == symbol) {
      return e.z;
    }
  }
  return 0;
}

std::string_view element_symbol(int z) {
  const auto *e = find_element(z);
  return e != nullptr ? e->symbol : std::string_view {};
}

double standard_atomic_mass(int z) {
  const auto *e = find_element(z);
  return e != nullptr ? e->mass : 0.0;
}

std::span<const int> default_valences(int z) {
  switch (z) {
  case 5: return kValB;
  case 6: return kValC;
  case 7: return kValN;
  case 8: return kValO;
  case 15: return kValP;
  case 16: return kValS;
  case 9:
  case 17:
  case 35:
  case 53:
    return kValHalogen;
  default:
    return {};
  }
}

double bond_order_value(BondOrder order) {
  switch (order) {
  case BondOrder::kSingle: return 1.0;
  case BondOrder::kDouble: return 2.0;
  case BondOrder::kTriple: return 3.0;
  case BondOrder::kAromatic: return 1.5;
  }
  return 0.0;
}

MolGraph parse_smiles(std::string_view text) {
  return SmilesParser(text).run();
}

std::vector<int> connected_components(const MolGraph &g) {
  const int n = g.num_atoms();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto &bd: g.bonds) {
    const int a = find(bd.begin);
    const int b = find(bd.end);
    if (a != b) {
      parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::vector<int> comp(n, -1);
  std::vector<int> root_id(n, -1);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    const int r = find(i);
    if (root_id[r] < 0) {
      root_id[r] = next++;
    }
    comp[i] = root_id[r];
  }
  return comp;
}

int cycle_rank(const MolGraph &g) {
  const auto comp = connected_components(g);
  const int ncomp =
      comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
  return g.num_bonds() - g.num_atoms() + ncomp;
}

RingFlags ring_membership(const MolGraph &g) {
  const int n = g.num_atoms();
  const int m = g.num_bonds();
  std::vector<std::vector<std::pair<int, int>>> adj(n);
  for (int b = 0; b < m; ++b) {
    adj[g.bonds[b].begin].emplace_back(g.bonds[b].end, b);
    adj[g.bonds[b].end].emplace_back(g.bonds[b].begin, b);
  }

  // Iterative Tarjan bridge finding.
  std::vector<int> disc(n, -1), low(n, 0);
  std::vector<bool> is_bridge(m, false);
  int timer = 0;
  struct Frame {
    int v;
    int parent_edge;
    std::size_t next;
  };
  for (int s = 0; s < n; ++s) {
    if (disc[s] >= 0) {
      continue;
    }
    std::vector<Frame> stack { { s, -1, 0 } };
    disc[s] = low[s] = timer++;
    while (!stack.empty()) {
      Frame &f = stack.back();
      if (f.next < adj[f.v].size()) {
        const auto [w, e] = adj[f.v][f.next++];
        if (e == f.parent_edge) {
          continue;
        }
        if (disc[w] < 0) {
          disc[w] = low[w] = timer++;
          stack.push_back({ w, e, 0 });
        } else {
          low[f.v] = std::min(low[f.v], disc[w]);
        }
      } else {
        const Frame done = f;
        stack.pop_back();
        if (!stack.empty()) {
          Frame &up = stack.back();
          low[up.v] = std::min(low[up.v], low[done.v]);
          if (low[done.v] > disc[up.v]) {
            is_bridge[done.parent_edge] = true;
          }
        }
      }
    }
  }

  RingFlags flags;
  flags.atom_in_ring.assign(n, false);
  flags.bond_in_ring.assign(m, false);
  for (int b = 0; b < m; ++b) {
    if (!is_bridge[b]) {
      flags.bond_in_ring[b] = true;
      flags.atom_in_ring[g.bonds[b].begin] = true;
      flags.atom_in_ring[g.bonds[b].end] = true;
    }
  }
  return flags;
}

void assign_ring_membership(MolGraph &g) {
  const RingFlags flags = ring_membership(g);
  for (int i = 0; i < g.num_atoms(); ++i) {
    g.atoms[i].in_ring = flags.atom_in_ring[i];
  }
  for (int b = 0; b < g.num_bonds(); ++b) {
    g.bonds[b].in_ring = flags.bond_in_ring[b];
  }
}

MolGraph permute_atoms(const MolGraph &g, std::span<const int> order) {
  const int n = g.num_atoms();
  if (static_cast<int>(order.size()) != n) {
    throw ShapeError("permute_atoms: order size mismatch");
  }
  std::vector<int> inverse(n, -1);
  for (int i = 0; i < n; ++i) {
    if (order[i] < 0 || order[i] >= n || inverse[order[i]] >= 0) {
      throw ShapeError("permute_atoms: not a permutation");
    }
    inverse[order[i]] = i;
  }
  MolGraph out;
  out.num_components = g.num_components;
  out.atoms.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.atoms.push_back(g.atoms[order[i]]);
  }
  out.bonds.reserve(g.bonds.size());
  for (const auto &bd: g.bonds) {
    const int a = inverse[bd.begin];
    const int b = inverse[bd.end];
    out.bonds.push_back(Bond { std::min(a, b), std::max(a, b), bd.order,
                               bd.in_ring });
  }
  std::sort(out.bonds.begin(), out.bonds.end(),
            [](const Bond &x, const Bond &y) {
              return std::tie(x.begin, x.end) < std::tie(y.begin, y.end);
            });
  return out;
}

}  // namespace molmix::chem
