// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "molmix/labels.hpp"
#include "molmix/molparse.hpp"

namespace molmix::synth {

/// A labeled dataset as CSV text plus the schema it follows.
struct CsvDataset {
  data::DatasetSchema schema;
  std::string csv;
};

// Structure-derived targets used by the generators.
double hetero_descriptor(const chem::MolGraph &g);  // graph-level, continuous
double ring_descriptor(const chem::MolGraph &g);
double size_descriptor(const chem::MolGraph &g);
// 1 when the atom is N/O/halogen or bonded to one, else 0.
std::vector<double> hetero_neighbour_flags(const chem::MolGraph &g);

/// `n` molecules with a graph-level regression column "target" and a
/// node-level binary column "flag"; each graph cell and each atom entry is
/// missing with probability `sparsity`.
CsvDataset overfit_dataset(std::uint64_t seed, int n = 128, double sparsity = 0.5);

/// Three datasets mimicking the task kinds of a ToyMix-style mix:
///   "qm"   primary, dense regression (3 labels)
///   "tox"  sparse imbalanced binary classification (4 labels)
///   "expr" raw z-scores for ranked classification (2 labels)
/// The auxiliary datasets reuse part of the primary molecules.
std::vector<CsvDataset> toy_mix(std::uint64_t seed, int primary_size = 240);

/// Writes each dataset as <dir>/<name>.csv plus a run configuration
/// <dir>/config.yaml that trains on them jointly. Returns the config path.
std::filesystem::path write_toy_mix(const std::filesystem::path &dir,
                                    std::uint64_t seed, int primary_size = 240,
                                    int epochs = 20);

}  // namespace molmix::synth
