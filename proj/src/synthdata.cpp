// SPDX-License-Identifier: Apache-2.0

#include "molmix/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>

#include "molmix/csv.hpp"
#include "molmix/error.hpp"
#include "molmix/synthetic.hpp"

namespace molmix::synth {

namespace fs = std::filesystem;

namespace {

bool is_hetero(const chem::Atom &a) {
  switch (a.atomic_number) {
  case 7:
  case 8:
  case 9:
  case 17:
  case 35:
  case 53:
    return true;
  default:
    return false;
  }
}

std::string num(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return { buf, r.ptr };
}

std::string cell(double x) {
  return std::isnan(x) ? std::string() : num(x);
}

std::string node_cell(const std::vector<double> &v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) {
      out += '|';
    }
    out += cell(v[i]);
  }
  return out;
}

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double maybe(double x, double p_missing, std::mt19937_64 &rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p_missing ? kNan : x;
}

std::string header(const data::DatasetSchema &s) {
  std::string h = s.smiles_column;
  for (const auto &c: s.columns) {
    h += "," + csv_escape(c.name);
  }
  return h + "\n";
}

}  // namespace

double hetero_descriptor(const chem::MolGraph &g) {
  double hetero = 0.0, aromatic = 0.0;
  for (const auto &a: g.atoms) {
    hetero += is_hetero(a) ? 1.0 : 0.0;
    aromatic += a.aromatic ? 1.0 : 0.0;
  }
  const double n = std::max(1, g.num_atoms());
  return hetero / n + 0.25 * aromatic / n;
}

double ring_descriptor(const chem::MolGraph &g) {
  double ring = 0.0;
  for (const auto &a: g.atoms) {
    ring += a.in_ring ? 1.0 : 0.0;
  }
  return ring / std::max(1, g.num_atoms());
}

double size_descriptor(const chem::MolGraph &g) {
  return std::log(static_cast<double>(std::max(1, g.num_atoms())));
}

std::vector<double> hetero_neighbour_flags(const chem::MolGraph &g) {
  std::vector<double> flags(g.atoms.size(), 0.0);
  for (std::size_t i = 0; i < g.atoms.size(); ++i) {
    flags[i] = is_hetero(g.atoms[i]) ? 1.0 : 0.0;
  }
  for (const auto &b: g.bonds) {
    const auto u = static_cast<std::size_t>(b.begin);
    const auto v = static_cast<std::size_t>(b.end);
    if (is_hetero(g.atoms[u])) {
      flags[v] = 1.0;
    }
    if (is_hetero(g.atoms[v])) {
      flags[u] = 1.0;
    }
  }
  return flags;
}

CsvDataset overfit_dataset(std::uint64_t seed, int n, double sparsity) {
  if (n < 1 || !(sparsity >= 0.0 && sparsity < 1.0)) {
    throw ConfigError("overfit_dataset: need n >= 1 and sparsity in [0, 1)");
  }
  CsvDataset ds;
  ds.schema.name = "overfit";
  ds.schema.columns = { { "target", Level::kGraph }, { "flag", Level::kNode } };
  ds.csv = header(ds.schema);
  std::mt19937_64 rng(seed ^ 0x5EEDull);
  for (const auto &smi: distinct_smiles(seed, n)) {
    const auto g = chem::parse_smiles(smi);
    const double y = 2.0 * hetero_descriptor(g) + ring_descriptor(g)
                     + 0.5 * size_descriptor(g);
    auto flags = hetero_neighbour_flags(g);
    for (auto &f: flags) {
      f = maybe(f, sparsity, rng);
    }
    ds.csv += csv_escape(smi) + "," + cell(maybe(y, sparsity, rng)) + ","
              + node_cell(flags) + "\n";
  }
  return ds;
}

std::vector<CsvDataset> toy_mix(std::uint64_t seed, int primary_size) {
  if (primary_size < 20) {
    throw ConfigError("toy_mix: primary_size must be >= 20");
  }
  const int tox_size = primary_size * 5 / 3;
  const int expr_size = primary_size * 5 / 4;
  const int tox_shared = primary_size / 2;
  const int expr_shared = primary_size / 3;
  const int total = primary_size + (tox_size - tox_shared) + (expr_size - expr_shared);
  const auto pool = distinct_smiles(seed, total);
  std::mt19937_64 rng(seed ^ 0x70717ull);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<std::string> primary(pool.begin(), pool.begin() + primary_size);
  auto pick = [&](int shared, int size, std::size_t from) {
    std::vector<std::string> shuffled = primary;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    std::vector<std::string> out(shuffled.begin(), shuffled.begin() + shared);
    out.insert(out.end(), pool.begin() + static_cast<std::ptrdiff_t>(from),
               pool.begin() + static_cast<std::ptrdiff_t>(from + static_cast<std::size_t>(size - shared)));
    return out;
  };
  const auto tox_mols = pick(tox_shared, tox_size, static_cast<std::size_t>(primary_size));
  const auto expr_mols = pick(expr_shared, expr_size,
                              static_cast<std::size_t>(primary_size + tox_size - tox_shared));

  std::vector<CsvDataset> out(3);
  auto &qm = out[0];
  qm.schema.name = "qm";
  qm.schema.columns = { { "gap", Level::kGraph }, { "ring", Level::kGraph },
                        { "size", Level::kGraph } };
  qm.csv = header(qm.schema);
  for (const auto &smi: primary) {
    const auto g = chem::parse_smiles(smi);
    qm.csv += csv_escape(smi) + "," + num(hetero_descriptor(g) + 0.02 * noise(rng)) + ","
              + num(ring_descriptor(g)) + "," + num(size_descriptor(g)) + "\n";
  }

  auto &tox = out[1];
  tox.schema.name = "tox";
  tox.schema.columns = { { "nr_a", Level::kGraph }, { "nr_b", Level::kGraph },
                         { "sr_a", Level::kGraph }, { "sr_b", Level::kGraph } };
  tox.csv = header(tox.schema);
  for (const auto &smi: tox_mols) {
    const auto g = chem::parse_smiles(smi);
    const double h = hetero_descriptor(g), r = ring_descriptor(g);
    const double s = size_descriptor(g);
    const double labels[] = {
      h + 0.05 * noise(rng) > 0.3 ? 1.0 : 0.0,
      r + 0.1 * noise(rng) > 0.6 ? 1.0 : 0.0,
      s + 0.2 * noise(rng) > std::log(15.0) ? 1.0 : 0.0,
      noise(rng) > 0.7 ? 1.0 : 0.0,
    };
    tox.csv += csv_escape(smi);
    for (double y: labels) {
      tox.csv += "," + cell(maybe(y, 0.25, rng));
    }
    tox.csv += "\n";
  }

  auto &expr = out[2];
  expr.schema.name = "expr";
  expr.schema.columns = { { "gene_a", Level::kGraph }, { "gene_b", Level::kGraph } };
  expr.csv = header(expr.schema);
  for (const auto &smi: expr_mols) {
    const auto g = chem::parse_smiles(smi);
    const double za = 10.0 * (ring_descriptor(g) - 0.35) + 0.5 * noise(rng);
    const double zb = 12.0 * (hetero_descriptor(g) - 0.25) + 0.5 * noise(rng);
    expr.csv += csv_escape(smi) + "," + num(za) + "," + num(zb) + "\n";
  }
  return out;
}

fs::path write_toy_mix(const fs::path &dir, std::uint64_t seed, int primary_size,
                       int epochs) {
  fs::create_directories(dir);
  for (const auto &d: toy_mix(seed, primary_size)) {
    std::ofstream out(dir / (d.schema.name + ".csv"), std::ios::binary);
    out << d.csv;
    if (!out) {
      throw DataError("cannot write " + (dir / (d.schema.name + ".csv")).string());
    }
  }
  const auto path = dir / "config.yaml";
  std::ofstream out(path, std::ios::binary);
  out << "seed: " << seed << "\n"
      << "preset: toymix\n"
      << "datasets:\n"
      << "  - {name: qm, path: qm.csv}\n"
      << "  - {name: tox, path: tox.csv}\n"
      << "  - {name: expr, path: expr.csv}\n"
      << "primary: qm\n"
      << "tasks:\n"
      << "  - {name: qm, dataset: qm, level: graph, loss: mae, norm: zscore,\n"
      << "     labels: [gap, ring, size]}\n"
      << "  - {name: tox, dataset: tox, level: graph, loss: bce,\n"
      << "     labels: [nr_a, nr_b, sr_a, sr_b]}\n"
      << "  - {name: expr, dataset: expr, level: graph, loss: hybrid, num_classes: 5,\n"
      << "     alpha: 0.5, bin_thresholds: [-4, -2, 2, 4], labels: [gene_a, gene_b]}\n"
      << "featurization:\n"
      << "  lap_k: 4\n"
      << "  rwse_steps: 8\n"
      << "model:\n"
      << "  type: gine\n"
      << "  hidden: 32\n"
      << "  lap_pe: {widths: [8]}\n"
      << "  rwse_pe: {widths: [8]}\n"
      << "  graph_mlp: [32]\n"
      << "  node_mlp: [32]\n"
      << "training:\n"
      << "  epochs: " << epochs << "\n"
      << "  eval_every: 5\n"
      << "  eval_splits: [val]\n";
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  return path;
}

}  // namespace molmix::synth
