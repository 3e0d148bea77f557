// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "molmix/molparse.hpp"
#include "molmix/synthetic.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace molmix::chem {
namespace {

std::vector<int> implicit_hs(const MolGraph &g) {
  std::vector<int> out;
  for (const auto &a: g.atoms) {
    out.push_back(a.implicit_h);
  }
  return out;
}

void expect_graph_invariants(const MolGraph &g) {
  std::vector<int> degree(g.atoms.size(), 0);
  std::set<std::pair<int, int>> seen;
  for (const auto &b: g.bonds) {
    ASSERT_NE(b.begin, b.end);
    ASSERT_GE(b.begin, 0);
    ASSERT_LT(b.end, g.num_atoms());
    ASSERT_TRUE(seen.emplace(std::min(b.begin, b.end),
                             std::max(b.begin, b.end)).second);
    ++degree[b.begin];
    ++degree[b.end];
  }
  for (int i = 0; i < g.num_atoms(); ++i) {
    EXPECT_EQ(g.atoms[i].degree, degree[i]);
    EXPECT_GE(g.atoms[i].implicit_h, 0);
  }
  EXPECT_GE(g.num_components, 1);
}

TEST(ParseSmiles, Ethanol) {
  const auto g = parse_smiles("CCO");
  ASSERT_EQ(g.num_atoms(), 3);
  ASSERT_EQ(g.num_bonds(), 2);
  for (const auto &b: g.bonds) {
    EXPECT_EQ(b.order, BondOrder::kSingle);
  }
  EXPECT_EQ(implicit_hs(g), (std::vector<int> { 3, 2, 1 }));
  EXPECT_EQ(g.num_components, 1);
}

TEST(ParseSmiles, Benzene) {
  const auto g = parse_smiles("c1ccccc1");
  ASSERT_EQ(g.num_atoms(), 6);
  ASSERT_EQ(g.num_bonds(), 6);
  for (const auto &a: g.atoms) {
    EXPECT_TRUE(a.aromatic);
    EXPECT_TRUE(a.in_ring);
    EXPECT_EQ(a.implicit_h, 1);
  }
  for (const auto &b: g.bonds) {
    EXPECT_EQ(b.order, BondOrder::kAromatic);
    EXPECT_TRUE(b.in_ring);
  }
}

TEST(ParseSmiles, DotSeparatesComponents) {
  const auto g = parse_smiles("C1CC1.O");
  EXPECT_EQ(g.num_atoms(), 4);
  EXPECT_EQ(g.num_bonds(), 3);
  EXPECT_EQ(g.num_components, 2);
}

TEST(ParseSmiles, AromaticHydrogenCounts) {
  EXPECT_EQ(implicit_hs(parse_smiles("c1ccncc1")),
            (std::vector<int> { 1, 1, 1, 0, 1, 1 }));
  EXPECT_EQ(implicit_hs(parse_smiles("c1cc[nH]c1")),
            (std::vector<int> { 1, 1, 1, 1, 1 }));
  EXPECT_EQ(implicit_hs(parse_smiles("c1ccsc1")),
            (std::vector<int> { 1, 1, 1, 0, 1 }));
  const auto naph = parse_smiles("c1ccc2ccccc2c1");
  EXPECT_EQ(naph.atoms[3].implicit_h, 0);
  EXPECT_EQ(naph.atoms[8].implicit_h, 0);
  EXPECT_EQ(parse_smiles("Cc1ccccc1").atoms[1].implicit_h, 0);
}

TEST(ParseSmiles, BracketAtoms) {
  const auto g = parse_smiles("[NH4+].[Cl-]");
  ASSERT_EQ(g.num_atoms(), 2);
  EXPECT_EQ(g.atoms[0].atomic_number, 7);
  EXPECT_EQ(g.atoms[0].formal_charge, 1);
  EXPECT_EQ(g.atoms[0].implicit_h, 4);
  EXPECT_EQ(g.atoms[1].formal_charge, -1);
  EXPECT_EQ(g.atoms[1].implicit_h, 0);

  EXPECT_EQ(parse_smiles("[O--]").atoms[0].formal_charge, -2);
  EXPECT_EQ(parse_smiles("[Fe+3]").atoms[0].formal_charge, 3);
  EXPECT_EQ(parse_smiles("[CH3:7]C").atoms[0].implicit_h, 3);
}

TEST(ParseSmiles, StereoIsDropped) {
  const auto a = parse_smiles("C[C@@H](N)C(=O)O");
  const auto b = parse_smiles("CC(N)C(=O)O");
  EXPECT_EQ(canonical_key(a), canonical_key(b));
  EXPECT_EQ(canonical_key(parse_smiles("F/C=C/F")),
            canonical_key(parse_smiles("FC=CF")));
  EXPECT_EQ(parse_smiles("[C@TH1H](F)(Cl)Br").atoms[0].implicit_h, 1);
}

TEST(ParseSmiles, ExplicitHydrogensFold) {
  const auto g = parse_smiles("[H]C([H])([H])O");
  ASSERT_EQ(g.num_atoms(), 2);
  EXPECT_EQ(g.atoms[0].implicit_h, 3);
  EXPECT_EQ(g.atoms[1].implicit_h, 1);
  // H2 has no heavy atom to fold into.
  EXPECT_EQ(parse_smiles("[H][H]").num_atoms(), 2);
}

TEST(ParseSmiles, RingClosureForms) {
  const auto g = parse_smiles("C%12CC%12");
  EXPECT_EQ(g.num_bonds(), 3);
  const auto d = parse_smiles("C=1CC1");
  EXPECT_EQ(d.bonds.back().order, BondOrder::kDouble);
  const auto e = parse_smiles("C1CC=1");
  EXPECT_EQ(e.bonds.back().order, BondOrder::kDouble);
}

TEST(ParseSmiles, ValenceTableInvariant) {
  // implicit_h + bond order sum == default valence for neutral organic atoms.
  std::mt19937_64 rng(11);
  synth::MoleculeSpec spec;
  spec.aromatic_probability = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto g = parse_smiles(synth::random_smiles(rng, spec));
    std::vector<int> sum(g.atoms.size(), 0);
    for (const auto &b: g.bonds) {
      sum[b.begin] += static_cast<int>(b.order);
      sum[b.end] += static_cast<int>(b.order);
    }
    for (int i = 0; i < g.num_atoms(); ++i) {
      const auto vals = default_valences(g.atoms[i].atomic_number);
      const int total = sum[i] + g.atoms[i].implicit_h;
      EXPECT_NE(std::find(vals.begin(), vals.end(), total), vals.end());
    }
  }
}

struct ErrorCase {
  const char *smiles;
  ParseError::Kind kind;
  std::size_t position;
};

TEST(ParseSmiles, Errors) {
  const ErrorCase cases[] = {
    { "C1CC", ParseError::Kind::kUnmatchedRing, 1 },
    { "CC$C", ParseError::Kind::kSyntax, 2 },
    { "C(C", ParseError::Kind::kSyntax, 3 },
    { "C)C", ParseError::Kind::kSyntax, 1 },
    { "CC=", ParseError::Kind::kSyntax, 2 },
    { "[Xx]", ParseError::Kind::kUnsupportedElement, 1 },
    { "[13C]", ParseError::Kind::kSyntax, 1 },
    { "C*", ParseError::Kind::kUnsupportedElement, 1 },
    { "CC>>C", ParseError::Kind::kSyntax, 2 },
    { "C(C)(C)(C)(C)C", ParseError::Kind::kValenceOverflow, 0 },
    { "O=O=O", ParseError::Kind::kValenceOverflow, 2 },
    { "", ParseError::Kind::kSyntax, 0 },
    { "C11", ParseError::Kind::kSyntax, 2 },
    { "Xe", ParseError::Kind::kUnsupportedElement, 0 },
  };
  for (const auto &c: cases) {
    SCOPED_TRACE(c.smiles);
    try {
      parse_smiles(c.smiles);
      ADD_FAILURE() << "expected a parse error";
    } catch (const ParseError &e) {
      EXPECT_EQ(e.kind(), c.kind) << e.what();
      EXPECT_EQ(e.position(), c.position) << e.what();
    }
  }
}

TEST(RingMembership, Basics) {
  for (const auto &b: parse_smiles("C1CC1").bonds) {
    EXPECT_TRUE(b.in_ring);
  }
  for (const auto &b: parse_smiles("CCO").bonds) {
    EXPECT_FALSE(b.in_ring);
  }
}

TEST(RingMembership, TwoTrianglesJoinedByLinker) {
  // Deletion oracle: 8 bonds, the two linker bonds are bridges.
  const auto g = parse_smiles("C1CC1CC1CC1");
  const auto oracle = testing::ring_bonds_by_deletion(g);
  const auto flags = ring_membership(g);
  ASSERT_EQ(g.num_bonds(), 8);
  int ring = 0;
  for (int b = 0; b < g.num_bonds(); ++b) {
    EXPECT_EQ(flags.bond_in_ring[b], oracle[b]);
    ring += oracle[b] ? 1 : 0;
  }
  EXPECT_EQ(ring, 6);
  EXPECT_EQ(g.num_bonds() - ring, 2);
  EXPECT_EQ(cycle_rank(g), 2);
  EXPECT_FALSE(g.atoms[3].in_ring);
}

TEST(RingMembership, MatchesDeletionOracleOnRandomMolecules) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = parse_smiles(synth::random_smiles(rng));
    const auto oracle = testing::ring_bonds_by_deletion(g);
    for (int b = 0; b < g.num_bonds(); ++b) {
      ASSERT_EQ(g.bonds[b].in_ring, oracle[b]);
      if (g.bonds[b].in_ring) {
        EXPECT_TRUE(g.atoms[g.bonds[b].begin].in_ring);
        EXPECT_TRUE(g.atoms[g.bonds[b].end].in_ring);
      }
    }
    for (int i = 0; i < g.num_atoms(); ++i) {
      bool any = false;
      for (int b = 0; b < g.num_bonds(); ++b) {
        if ((g.bonds[b].begin == i || g.bonds[b].end == i) && oracle[b]) {
          any = true;
        }
      }
      EXPECT_EQ(g.atoms[i].in_ring, any);
    }
  }
}

TEST(CanonicalKey, SimpleCases) {
  EXPECT_EQ(canonical_key(parse_smiles("OCC")),
            canonical_key(parse_smiles("CCO")));
  EXPECT_NE(canonical_key(parse_smiles("CCO")),
            canonical_key(parse_smiles("CCN")));
  EXPECT_NE(canonical_key(parse_smiles("CC")),
            canonical_key(parse_smiles("C=C")));
  EXPECT_NE(canonical_key(parse_smiles("N")),
            canonical_key(parse_smiles("[NH4+]")));
  EXPECT_NE(canonical_key(parse_smiles("CCCC")),
            canonical_key(parse_smiles("CC(C)C")));
  EXPECT_EQ(canonical_key(parse_smiles("C1CC1.O")),
            canonical_key(parse_smiles("O.C1CC1")));
  // Same multiset of fragments, different connectivity.
  EXPECT_NE(canonical_key(parse_smiles("C1CCCCC1")),
            canonical_key(parse_smiles("C1CC1.C1CC1")));
}

TEST(CanonicalKey, RegularGraphsNeedIndividualization) {
  // Cubane vs. two separate 4-rings: refinement alone cannot split atoms.
  const std::string cubane = "C12C3C4C1C5C2C3C45";
  const auto g = parse_smiles(cubane);
  std::mt19937_64 rng(3);
  const std::string key = canonical_key(g);
  for (int t = 0; t < 20; ++t) {
    const auto p = testing::random_permutation(g.num_atoms(), rng);
    EXPECT_EQ(canonical_key(parse_smiles(write_smiles(g, p))), key);
  }
}

TEST(CanonicalKey, WriterRoundTripIsIsomorphic) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 200; ++t) {
    const auto g = parse_smiles(synth::random_smiles(rng));
    const auto p = testing::random_permutation(g.num_atoms(), rng);
    const auto h = parse_smiles(write_smiles(g, p));
    ASSERT_EQ(h.num_atoms(), g.num_atoms());
    ASSERT_EQ(h.num_bonds(), g.num_bonds());
    expect_graph_invariants(h);
    EXPECT_EQ(canonical_key(h), canonical_key(g));
  }
}

TEST(CanonicalKey, PermuteAtomsIsInvariant) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 200; ++t) {
    const auto g = parse_smiles(synth::random_smiles(rng));
    const auto p = testing::random_permutation(g.num_atoms(), rng);
    const auto h = permute_atoms(g, p);
    EXPECT_EQ(canonical_key(h), canonical_key(g));
    // Canonical reordering of any permutation yields identical graphs.
    const auto cg = permute_atoms(g, canonical_order(g));
    const auto ch = permute_atoms(h, canonical_order(h));
    ASSERT_EQ(cg.num_bonds(), ch.num_bonds());
    for (int i = 0; i < cg.num_atoms(); ++i) {
      EXPECT_EQ(cg.atoms[i].atomic_number, ch.atoms[i].atomic_number);
      EXPECT_EQ(cg.atoms[i].implicit_h, ch.atoms[i].implicit_h);
    }
    for (int b = 0; b < cg.num_bonds(); ++b) {
      EXPECT_EQ(cg.bonds[b].begin, ch.bonds[b].begin);
      EXPECT_EQ(cg.bonds[b].end, ch.bonds[b].end);
      EXPECT_EQ(cg.bonds[b].order, ch.bonds[b].order);
    }
  }
}

TEST(CanonicalKey, ManySymmetricFragmentsStayFast) {
  const auto g = parse_smiles("O.O.O.O.O.O.O.O.O.O.O.O.C(C)(C)(C)C(C)(C)C");
  EXPECT_EQ(canonical_key(g),
            canonical_key(parse_smiles("CC(C)(C)C(C)(C)C.O.O.O.O.O.O.O.O.O.O.O.O")));
}

TEST(ParseSmiles, RandomMoleculesSatisfyGraphInvariants) {
  std::mt19937_64 rng(77);
  for (int t = 0; t < 300; ++t) {
    expect_graph_invariants(parse_smiles(synth::random_smiles(rng)));
  }
}

TEST(ParseSmiles, GoldenCorpusCounts) {
  for (const auto &m: testing::golden_corpus()) {
    const auto g = parse_smiles(m.smiles);
    EXPECT_EQ(g.num_atoms(), m.atoms) << m.smiles;
    EXPECT_EQ(g.num_bonds(), m.bonds) << m.smiles;
    EXPECT_EQ(cycle_rank(g), m.rings) << m.smiles;
    EXPECT_EQ(g.num_components, m.components) << m.smiles;
    expect_graph_invariants(g);
  }
}

}  // namespace
}  // namespace molmix::chem
