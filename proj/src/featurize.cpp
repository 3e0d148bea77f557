// SPDX-License-Identifier: Apache-2.0

#include "molmix/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "molmix/error.hpp"

namespace molmix::feat {
namespace {

constexpr int kMaxDegree = 6;
constexpr int kMaxImplicitH = 4;

bool is_known_atom_feature(const std::string &name) {
  return name == "element" || name == "degree" || name == "formal_charge"
         || name == "implicit_h" || name == "aromatic" || name == "in_ring";
}

bool is_known_bond_feature(const std::string &name) {
  return name == "bond_order" || name == "bond_in_ring";
}

std::size_t atom_feature_width(const std::string &name,
                               const FeatureConfig &cfg) {
  if (name == "element") {
    return cfg.elements.size() + 1;
  }
  if (name == "degree") {
    return kMaxDegree + 1;
  }
  if (name == "implicit_h") {
    return kMaxImplicitH + 1;
  }
  return 1;
}

std::size_t bond_feature_width(const std::string &name) {
  return name == "bond_order" ? 4 : 1;
}

}  // namespace

void FeatureConfig::validate() const {
  for (const auto &f: atom_features) {
    if (!is_known_atom_feature(f)) {
      throw ConfigError("unknown atom feature '" + f + "'");
    }
  }
  for (const auto &f: bond_features) {
    if (!is_known_bond_feature(f)) {
      throw ConfigError("unknown bond feature '" + f + "'");
    }
  }
}

std::size_t FeatureConfig::node_dim() const {
  std::size_t d = 0;
  for (const auto &f: atom_features) {
    d += atom_feature_width(f, *this);
  }
  return d;
}

std::size_t FeatureConfig::edge_dim() const {
  std::size_t d = 0;
  for (const auto &f: bond_features) {
    d += bond_feature_width(f);
  }
  return d;
}

std::string FeatureConfig::fingerprint() const {
  std::string out = "feat-v1;atom=";
  for (const auto &f: atom_features) {
    out += f + ',';
  }
  out += ";bond=";
  for (const auto &f: bond_features) {
    out += f + ',';
  }
  out += ";elements=";
  for (int z: elements) {
    out += std::to_string(z) + ',';
  }
  return out;
}

FeaturizedGraph featurize(const chem::MolGraph &g, const FeatureConfig &config) {
  config.validate();
  const std::size_t n = g.atoms.size();
  const std::size_t m = g.bonds.size();

  FeaturizedGraph out;
  out.node_features = Matrix(n, config.node_dim());
  for (std::size_t i = 0; i < n; ++i) {
    const auto &a = g.atoms[i];
    auto row = out.node_features.row(i);
    std::size_t off = 0;
    for (const auto &f: config.atom_features) {
      if (f == "element") {
        auto it = std::find(config.elements.begin(), config.elements.end(),
                            a.atomic_number);
        const auto slot =
            static_cast<std::size_t>(it - config.elements.begin());
        row[off + slot] = 1.0;
      } else if (f == "degree") {
        row[off + std::min(a.degree, kMaxDegree)] = 1.0;
      } else if (f == "formal_charge") {
        row[off] = static_cast<double>(a.formal_charge);
      } else if (f == "implicit_h") {
        row[off + std::min(a.implicit_h, kMaxImplicitH)] = 1.0;
      } else if (f == "aromatic") {
        row[off] = a.aromatic ? 1.0 : 0.0;
      } else if (f == "in_ring") {
        row[off] = a.in_ring ? 1.0 : 0.0;
      }
      off += atom_feature_width(f, config);
    }
  }

  out.edge_features = Matrix(2 * m, config.edge_dim());
  out.edge_index.reserve(2 * m);
  for (std::size_t b = 0; b < m; ++b) {
    const auto &bd = g.bonds[b];
    out.edge_index.emplace_back(bd.begin, bd.end);
    out.edge_index.emplace_back(bd.end, bd.begin);
    for (std::size_t dir = 0; dir < 2; ++dir) {
      auto row = out.edge_features.row(2 * b + dir);
      std::size_t off = 0;
      for (const auto &f: config.bond_features) {
        if (f == "bond_order") {
          row[off + static_cast<std::size_t>(bd.order) - 1] = 1.0;
        } else {
          row[off] = bd.in_ring ? 1.0 : 0.0;
        }
        off += bond_feature_width(f);
      }
    }
  }

  out.descriptors = descriptors(g);
  return out;
}

std::map<std::string, double> descriptors(const chem::MolGraph &g) {
  const int n = g.num_atoms();
  double mw = 0.0;
  int heavy = 0;
  int hetero = 0;
  int hba = 0;
  int hbd = 0;
  int carbons = 0;
  int sp3_carbons = 0;

  std::vector<bool> only_single(n, true);
  for (const auto &bd: g.bonds) {
    if (bd.order != chem::BondOrder::kSingle) {
      only_single[bd.begin] = false;
      only_single[bd.end] = false;
    }
  }

  for (int i = 0; i < n; ++i) {
    const auto &a = g.atoms[i];
    mw += chem::standard_atomic_mass(a.atomic_number)
          + a.implicit_h * chem::standard_atomic_mass(1);
    if (a.atomic_number != 1) {
      ++heavy;
    }
    if (a.atomic_number != 1 && a.atomic_number != 6) {
      ++hetero;
    }
    if (a.atomic_number == 7 || a.atomic_number == 8) {
      ++hba;
      hbd += a.implicit_h;
    }
    if (a.atomic_number == 6) {
      ++carbons;
      if (only_single[i] && a.degree + a.implicit_h == 4) {
        ++sp3_carbons;
      }
    }
  }

  int rotatable = 0;
  for (const auto &bd: g.bonds) {
    if (bd.order == chem::BondOrder::kSingle && !bd.in_ring
        && g.atoms[bd.begin].degree >= 2 && g.atoms[bd.end].degree >= 2) {
      ++rotatable;
    }
  }

  return {
    { "fsp3", carbons > 0 ? static_cast<double>(sp3_carbons) / carbons : 0.0 },
    { "mw", mw },
    { "n_heavy_atoms", static_cast<double>(heavy) },
    { "n_hetero_atoms", static_cast<double>(hetero) },
    { "n_lipinski_hba", static_cast<double>(hba) },
    { "n_lipinski_hbd", static_cast<double>(hbd) },
    { "n_rings", static_cast<double>(chem::cycle_rank(g)) },
    { "n_rotatable_bonds", static_cast<double>(rotatable) },
  };
}

NormKind parse_norm_kind(const std::string &name) {
  if (name == "none") {
    return NormKind::kNone;
  }
  if (name == "minmax" || name == "min-max") {
    return NormKind::kMinMax;
  }
  if (name == "zscore" || name == "z-score") {
    return NormKind::kZScore;
  }
  throw ConfigError("unknown normalization kind '" + name + "'");
}

std::string to_string(NormKind kind) {
  switch (kind) {
  case NormKind::kNone: return "none";
  case NormKind::kMinMax: return "minmax";
  case NormKind::kZScore: return "zscore";
  }
  return "none";
}

NormParams fit_norm_column(const std::string &name,
                           std::span<const double> values, NormKind kind,
                           std::vector<std::string> *warnings) {
  NormParams p;
  p.name = name;
  p.kind = kind;
  if (kind == NormKind::kNone) {
    return p;
  }

  std::size_t count = 0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (double v: values) {
    if (std::isnan(v)) {
      continue;
    }
    ++count;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
  }
  if (count == 0) {
    if (warnings != nullptr) {
      warnings->push_back("label '" + name
                          + "' has no training values; normalization disabled");
    }
    p.kind = NormKind::kNone;
    return p;
  }

  if (kind == NormKind::kMinMax) {
    if (!(hi > lo)) {
      throw NumericError("min-max normalization of '" + name
                         + "': min equals max");
    }
    p.a = lo;
    p.b = hi;
    return p;
  }

  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (double v: values) {
    if (!std::isnan(v)) {
      ss += (v - mean) * (v - mean);
    }
  }
  const double std = std::sqrt(ss / static_cast<double>(count));
  if (!(std > 0.0)) {
    throw NumericError("z-score normalization of '" + name
                       + "': zero variance");
  }
  p.a = mean;
  p.b = std;
  return p;
}

double apply_norm(double x, const NormParams &p) {
  if (std::isnan(x)) {
    return x;
  }
  switch (p.kind) {
  case NormKind::kNone: return x;
  case NormKind::kMinMax: return (x - p.a) / (p.b - p.a);
  case NormKind::kZScore: return (x - p.a) / p.b;
  }
  return x;
}

double invert_norm(double x, const NormParams &p) {
  if (std::isnan(x)) {
    return x;
  }
  switch (p.kind) {
  case NormKind::kNone: return x;
  case NormKind::kMinMax: return x * (p.b - p.a) + p.a;
  case NormKind::kZScore: return x * p.b + p.a;
  }
  return x;
}

void apply_norm(std::span<double> values, const NormParams &p) {
  for (double &v: values) {
    v = apply_norm(v, p);
  }
}

void invert_norm(std::span<double> values, const NormParams &p) {
  for (double &v: values) {
    v = invert_norm(v, p);
  }
}

}  // namespace molmix::feat
