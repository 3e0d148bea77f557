// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "molmix/matrix.hpp"
#include "molmix/molparse.hpp"

namespace molmix::feat {

// Atom feature names: "element", "degree", "formal_charge", "implicit_h",
// "aromatic", "in_ring". Bond feature names: "bond_order", "bond_in_ring".
struct FeatureConfig {
  std::vector<std::string> atom_features { "element",    "degree",
                                           "formal_charge", "implicit_h",
                                           "aromatic",   "in_ring" };
  std::vector<std::string> bond_features { "bond_order", "bond_in_ring" };
  // Element one-hot vocabulary; anything else lands in a trailing "other".
  std::vector<int> elements { 5, 6, 7, 8, 9, 14, 15, 16, 17, 34, 35, 53, 1 };

  // Throws ConfigError on unknown feature names.
  void validate() const;
  std::size_t node_dim() const;
  std::size_t edge_dim() const;
  // Stable text form; part of cache keys.
  std::string fingerprint() const;
};

struct FeaturizedGraph {
  Matrix node_features;  // [num_atoms x node_dim]
  Matrix edge_features;  // [2*num_bonds x edge_dim]
  // Directed edges; edge 2b is bond b begin->end, 2b+1 is end->begin.
  std::vector<std::pair<int, int>> edge_index;
  std::map<std::string, double> descriptors;

  bool operator==(const FeaturizedGraph &) const = default;
};

FeaturizedGraph featurize(const chem::MolGraph &g, const FeatureConfig &config);

/// Cheap 2D descriptors: mw, n_heavy_atoms, n_hetero_atoms, n_rings,
/// n_rotatable_bonds, n_lipinski_hba, n_lipinski_hbd, fsp3.
std::map<std::string, double> descriptors(const chem::MolGraph &g);

enum class NormKind {
  kNone,
  kMinMax,
  kZScore,
};

NormKind parse_norm_kind(const std::string &name);
std::string to_string(NormKind kind);

// (a, b) is (min, max) for min-max and (mean, std) for z-score.
struct NormParams {
  std::string name;
  NormKind kind = NormKind::kNone;
  double a = 0.0;
  double b = 1.0;

  bool operator==(const NormParams &) const = default;
};

struct NormStats {
  std::vector<NormParams> labels;
  std::vector<std::string> warnings;
};

/// Fits one label column. NaN entries are ignored. A column with no values
/// falls back to kNone and appends a warning. Population std for z-score.
NormParams fit_norm_column(const std::string &name,
                           std::span<const double> values, NormKind kind,
                           std::vector<std::string> *warnings = nullptr);

double apply_norm(double x, const NormParams &p);
double invert_norm(double x, const NormParams &p);
void apply_norm(std::span<double> values, const NormParams &p);
void invert_norm(std::span<double> values, const NormParams &p);

}  // namespace molmix::feat
