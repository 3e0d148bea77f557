// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "molmix/labels.hpp"

namespace molmix::data {

enum class SplitTag : std::uint8_t {
  kTrain,
  kVal,
  kTest,
  kTestSeen,
};

// "train", "val", "test", "test_seen".
std::string to_string(SplitTag tag);
SplitTag parse_split_tag(const std::string &name);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;

  void validate() const;
};

/// Per-row tags of one dataset.
struct SplitAssignment {
  std::string dataset;
  std::vector<SplitTag> tags;
  std::uint64_t seed = 0;
  SplitRatios ratios;

  std::size_t count(SplitTag tag) const;
  std::vector<std::size_t> indices(SplitTag tag) const;
};

/// Splits `sizes` rows into train/val/test counts: floors of the ratios,
/// remainder to the largest fractional parts (train, val, test on ties).
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios &r);

/// The primary dataset is split uniformly at random. Rows of every other
/// dataset whose key is in the primary train split become test_seen; the
/// rest are split by the same ratios. Deterministic in `seed`.
std::map<std::string, SplitAssignment>
make_splits(std::span<const LabelTable *const> tables,
            const std::string &primary, const SplitRatios &ratios,
            std::uint64_t seed);

/// JSON object {"train": [...], "val": [...], "test": [...],
/// "test-seen": [...]} of row indices. The reader also accepts "test_seen"
/// and requires the lists to partition [0, n).
std::string split_to_json(const SplitAssignment &s);
SplitAssignment split_from_json(const std::string &text, std::size_t n,
                                const std::string &dataset);
void write_split_file(const std::filesystem::path &path,
                      const SplitAssignment &s);
SplitAssignment read_split_file(const std::filesystem::path &path,
                                std::size_t n, const std::string &dataset);

}  // namespace molmix::data
