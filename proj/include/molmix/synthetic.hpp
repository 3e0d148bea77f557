// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace molmix::synth {

struct MoleculeSpec {
  int min_atoms = 4;
  int max_atoms = 20;
  double ring_probability = 0.3;
  double aromatic_probability = 0.25;
  double branch_probability = 0.25;
};

// Random valid SMILES (retries until the parser accepts it) with a heavy-atom
// count within [min_atoms, max_atoms].
std::string random_smiles(std::mt19937_64 &rng, const MoleculeSpec &spec = {});

// n distinct molecules (by canonical key).
std::vector<std::string> distinct_smiles(std::uint64_t seed, int n,
                                         const MoleculeSpec &spec = {});

}  // namespace molmix::synth
