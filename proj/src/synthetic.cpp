// SPDX-License-Identifier: Apache-2.0

#include "molmix/synthetic.hpp"

#include <set>
#include <string_view>

#include "molmix/molparse.hpp"

namespace molmix::synth {
namespace {

std::string ring_label(int digit) {
  if (digit < 10) {
    return std::string(1, static_cast<char>('0' + digit));
  }
  return "%" + std::to_string(digit);
}

std::string candidate(std::mt19937_64 &rng, const MoleculeSpec &spec) {
  std::uniform_int_distribution<int> size_dist(spec.min_atoms, spec.max_atoms);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int target = size_dist(rng);

  static constexpr std::string_view kAtoms[] = { "C", "C", "C", "C", "C",
                                                  "C", "N", "O", "C", "N",
                                                  "O", "F", "Cl", "S" };
  std::uniform_int_distribution<std::size_t> atom_dist(0, std::size(kAtoms) - 1);

  std::string out;
  int atoms = 0;
  int next_digit = 1;
  // Open ring closures on the main chain: (digit, chain position).
  std::vector<std::pair<int, int>> open;
  int chain_pos = 0;
  bool first = true;

  while (atoms < target) {
    const double r = u(rng);
    if (!first) {
      const double b = u(rng);
      if (b < 0.12) {
        out += '=';
      } else if (b < 0.15) {
        out += '#';
      }
    }
    if (r < spec.aromatic_probability && target - atoms >= 6) {
      const int d = next_digit++;
      const std::string lab = ring_label(d);
      const bool pyridine = u(rng) < 0.3;
      out += "c" + lab + "ccc" + std::string(pyridine ? "n" : "c") + "c" + lab;
      atoms += 6;
    } else {
      out += kAtoms[atom_dist(rng)];
      atoms += 1;
    }
    ++chain_pos;
    first = false;

    // Close a ring opened at least two chain atoms back.
    if (!open.empty() && chain_pos - open.back().second >= 3
        && u(rng) < 0.5) {
      out += ring_label(open.back().first);
      open.pop_back();
    } else if (u(rng) < spec.ring_probability && open.size() < 2) {
      const int d = next_digit++;
      out += ring_label(d);
      open.emplace_back(d, chain_pos);
    }

    if (atoms < target - 1 && u(rng) < spec.branch_probability) {
      out += '(';
      if (u(rng) < 0.2) {
        out += '=';
      }
      out += kAtoms[atom_dist(rng)];
      atoms += 1;
      if (atoms < target - 1 && u(rng) < 0.4) {
        out += kAtoms[atom_dist(rng)];
        atoms += 1;
      }
      out += ')';
    }
  }
  // Close whatever remains where possible; otherwise the parser rejects it
  // and we retry.
  while (!open.empty()) {
    if (chain_pos - open.back().second < 2) {
      out += 'C';
      ++chain_pos;
      continue;
    }
    out += ring_label(open.back().first);
    open.pop_back();
  }
  return out;
}

}  // namespace

std::string random_smiles(std::mt19937_64 &rng, const MoleculeSpec &spec) {
  for (;;) {
    std::string s = candidate(rng, spec);
    try {
      const auto g = chem::parse_smiles(s);
      if (g.num_atoms() >= spec.min_atoms
          && g.num_atoms() <= spec.max_atoms) {
        return s;
      }
    } catch (const chem::ParseError &) {
    }
  }
}

std::vector<std::string> distinct_smiles(std::uint64_t seed, int n,
                                         const MoleculeSpec &spec) {
  std::mt19937_64 rng(seed);
  std::set<std::string> keys;
  std::vector<std::string> out;
  while (static_cast<int>(out.size()) < n) {
    std::string s = random_smiles(rng, spec);
    if (keys.insert(chem::canonical_key(chem::parse_smiles(s))).second) {
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace molmix::synth
