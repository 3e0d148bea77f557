// SPDX-License-Identifier: Apache-2.0

#include "molmix/splits.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include "molmix/error.hpp"

namespace molmix::data {
namespace {

// FNV-1a, used to derive a per-dataset stream from the shared seed.
std::uint64_t fnv1a(const std::string &s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c: s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void assign_by_ratio(std::vector<std::size_t> rows, const SplitRatios &r,
                     std::mt19937_64 &rng, std::vector<SplitTag> &tags) {
  for (std::size_t i = rows.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(rows[i - 1], rows[j]);
  }
  const auto counts = split_counts(rows.size(), r);
  std::size_t k = 0;
  const SplitTag order[] = { SplitTag::kTrain, SplitTag::kVal, SplitTag::kTest };
  for (int part = 0; part < 3; ++part) {
    for (std::size_t i = 0; i < counts[part]; ++i) {
      tags[rows[k++]] = order[part];
    }
  }
}

}  // namespace

std::string to_string(SplitTag tag) {
  switch (tag) {
  case SplitTag::kTrain: return "train";
  case SplitTag::kVal: return "val";
  case SplitTag::kTest: return "test";
  case SplitTag::kTestSeen: return "test_seen";
  }
  return "train";
}

SplitTag parse_split_tag(const std::string &name) {
  if (name == "train") {
    return SplitTag::kTrain;
  }
  if (name == "val") {
    return SplitTag::kVal;
  }
  if (name == "test") {
    return SplitTag::kTest;
  }
  if (name == "test_seen" || name == "test-seen") {
    return SplitTag::kTestSeen;
  }
  throw ConfigError("unknown split '" + name + "'");
}

void SplitRatios::validate() const {
  if (train < 0.0 || val < 0.0 || test < 0.0
      || std::abs(train + val + test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
}

std::size_t SplitAssignment::count(SplitTag tag) const {
  return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), tag));
}

std::vector<std::size_t> SplitAssignment::indices(SplitTag tag) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == tag) {
      out.push_back(i);
    }
  }
  return out;
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios &r) {
  r.validate();
  const double want[3] = { r.train * n, r.val * n, r.test * n };
  std::array<std::size_t, 3> counts {};
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    // Guard against 8.000000001 style products.
    counts[i] = static_cast<std::size_t>(std::floor(want[i] + 1e-9));
    used += counts[i];
  }
  std::array<int, 3> order { 0, 1, 2 };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return want[a] - counts[a] > want[b] - counts[b];
  });
  for (std::size_t k = 0; used < n; ++k) {
    ++counts[order[k % 3]];
    ++used;
  }
  return counts;
}

std::map<std::string, SplitAssignment>
make_splits(std::span<const LabelTable *const> tables,
            const std::string &primary, const SplitRatios &ratios,
            std::uint64_t seed) {
  ratios.validate();
  const LabelTable *prim = nullptr;
  for (const auto *t: tables) {
    if (t->dataset == primary) {
      prim = t;
    }
  }
  if (prim == nullptr) {
    throw ConfigError("primary dataset '" + primary + "' not loaded");
  }

  std::map<std::string, SplitAssignment> out;
  auto start = [&](const LabelTable &t) -> SplitAssignment & {
    SplitAssignment &s = out[t.dataset];
    s.dataset = t.dataset;
    s.seed = seed;
    s.ratios = ratios;
    s.tags.assign(t.size(), SplitTag::kTrain);
    return s;
  };

  SplitAssignment &ps = start(*prim);
  {
    std::mt19937_64 rng(seed ^ fnv1a(prim->dataset));
    std::vector<std::size_t> rows(prim->size());
    std::iota(rows.begin(), rows.end(), 0);
    assign_by_ratio(std::move(rows), ratios, rng, ps.tags);
  }
  std::unordered_set<std::string> primary_train;
  for (std::size_t i = 0; i < prim->size(); ++i) {
    if (ps.tags[i] == SplitTag::kTrain) {
      primary_train.insert(prim->keys[i]);
    }
  }

  for (const auto *t: tables) {
    if (t == prim) {
      continue;
    }
    SplitAssignment &s = start(*t);
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < t->size(); ++i) {
      if (primary_train.count(t->keys[i]) != 0) {
        s.tags[i] = SplitTag::kTestSeen;
      } else {
        rest.push_back(i);
      }
    }
    std::mt19937_64 rng(seed ^ fnv1a(t->dataset));
    assign_by_ratio(std::move(rest), ratios, rng, s.tags);
  }
  return out;
}

std::string split_to_json(const SplitAssignment &s) {
  nlohmann::ordered_json j;
  j["train"] = s.indices(SplitTag::kTrain);
  j["val"] = s.indices(SplitTag::kVal);
  j["test"] = s.indices(SplitTag::kTest);
  j["test-seen"] = s.indices(SplitTag::kTestSeen);
  return j.dump();
}

SplitAssignment split_from_json(const std::string &text, std::size_t n,
                                const std::string &dataset) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &e) {
    throw DataError("split file for '" + dataset + "': " + e.what());
  }
  if (!j.is_object()) {
    throw DataError("split file for '" + dataset + "' is not a JSON object");
  }
  SplitAssignment s;
  s.dataset = dataset;
  s.tags.assign(n, SplitTag::kTrain);
  std::vector<bool> seen(n, false);
  for (const auto &[name, list]: j.items()) {
    const SplitTag tag = parse_split_tag(name);
    if (!list.is_array()) {
      throw DataError("split '" + name + "' is not a list");
    }
    for (const auto &v: list) {
      if (!v.is_number_unsigned() || v.get<std::size_t>() >= n) {
        throw DataError("split '" + name + "' has an invalid row index");
      }
      const auto i = v.get<std::size_t>();
      if (seen[i]) {
        throw DataError("row " + std::to_string(i) + " appears in two splits");
      }
      seen[i] = true;
      s.tags[i] = tag;
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw DataError("split file for '" + dataset + "' does not cover every row");
  }
  return s;
}

void write_split_file(const std::filesystem::path &path,
                      const SplitAssignment &s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write split file " + path.string());
  }
  out << split_to_json(s) << '\n';
}

SplitAssignment read_split_file(const std::filesystem::path &path,
                                std::size_t n, const std::string &dataset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open split file " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return split_from_json(ss.str(), n, dataset);
}

}  // namespace molmix::data
