// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "molmix/error.hpp"

namespace molmix::chem {

enum class BondOrder : std::uint8_t {
  kSingle = 1,
  kDouble = 2,
  kTriple = 3,
  kAromatic = 4,
};

struct Atom {
  int atomic_number = 0;
  int formal_charge = 0;
  bool aromatic = false;
  int implicit_h = 0;
  int degree = 0;
  bool in_ring = false;
};

struct Bond {
  int begin = 0;
  int end = 0;
  BondOrder order = BondOrder::kSingle;
  bool in_ring = false;
};

// Heavy-atom molecular graph. Hydrogens are carried as per-atom counts.
struct MolGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  int num_components = 0;

  int num_atoms() const { return static_cast<int>(atoms.size()); }
  int num_bonds() const { return static_cast<int>(bonds.size()); }
};

class ParseError : public DataError {
 public:
  enum class Kind {
    kSyntax,
    kUnmatchedRing,
    kUnsupportedElement,
    kValenceOverflow,
  };

  ParseError(Kind kind, std::size_t position, const std::string &what);

  Kind kind() const noexcept { return kind_; }
  std::size_t position() const noexcept { return position_; }

 private:
  Kind kind_;
  std::size_t position_;
};

// Element table lookups. Unknown symbols/numbers return 0 / "".
int atomic_number(std::string_view symbol);
std::string_view element_symbol(int atomic_number);
double standard_atomic_mass(int atomic_number);
// Default valences for the organic subset, ascending. Empty for others.
std::span<const int> default_valences(int atomic_number);

double bond_order_value(BondOrder order);

/// Parses a SMILES string into a heavy-atom graph.
///
/// Accepted: organic-subset atoms (aromatic lowercase included), bracket
/// atoms with H count and charge, ring closures (`1`-`9`, `%nn`), branches,
/// bond symbols `- = # :`, and `.` separated components. Stereo markers
/// (`/`, `\`, `@`) are read and dropped. Isotopes, wildcards and reaction
/// syntax are rejected.
MolGraph parse_smiles(std::string_view text);

/// Recomputes bond/atom ring flags in place; a bond is in a ring iff it is
/// not a bridge.
void assign_ring_membership(MolGraph &g);

struct RingFlags {
  std::vector<bool> atom_in_ring;
  std::vector<bool> bond_in_ring;
};

RingFlags ring_membership(const MolGraph &g);

// Connected component id per atom, numbered in order of first atom.
std::vector<int> connected_components(const MolGraph &g);

// Cycle rank: bonds - atoms + components.
int cycle_rank(const MolGraph &g);

// Canonical atom order: order[i] is the original index of the atom placed at
// canonical position i. Invariant under input atom permutation up to graph
// automorphisms.
std::vector<int> canonical_order(const MolGraph &g);

struct CanonicalForm {
  std::string key;
  std::vector<int> order;
};

// Key and order from a single canonicalization pass.
CanonicalForm canonical_form(const MolGraph &g);

/// Permutation-invariant molecule identity used for deduplication and
/// cross-dataset alignment. Not a SMILES string.
std::string canonical_key(const MolGraph &g);

// Returns a graph whose atom i is g.atoms[order[i]]; bonds are remapped and
// sorted by (min endpoint, max endpoint).
MolGraph permute_atoms(const MolGraph &g, std::span<const int> order);

// Emits a SMILES string that parses back to an isomorphic graph. Traversal
// starts from the lowest-priority atom of each component and visits
// neighbors in ascending priority; all atoms are written bracketed with
// explicit H counts and every bond symbol is explicit.
std::string write_smiles(const MolGraph &g, std::span<const int> priority);
std::string write_smiles(const MolGraph &g);

}  // namespace molmix::chem
