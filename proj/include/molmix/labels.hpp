// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "molmix/featurize.hpp"
#include "molmix/matrix.hpp"
#include "molmix/task.hpp"

namespace molmix::data {

struct ColumnSchema {
  std::string name;
  Level level = Level::kGraph;
};

struct DatasetSchema {
  std::string name;
  std::string smiles_column = "smiles";
  std::vector<ColumnSchema> columns;
};

/// Labels of one dataset keyed by canonical key. Node-level values are
/// stored per atom in canonical atom order.
struct LabelTable {
  std::string dataset;
  std::vector<std::string> keys;
  std::vector<std::string> smiles;  // first occurrence
  std::vector<int> num_atoms;
  std::vector<std::string> graph_columns;
  Matrix graph;  // [rows x graph_columns], NaN = missing
  std::vector<std::string> node_columns;
  // node[row][col]; an empty vector means the whole entry is missing.
  std::vector<std::vector<std::vector<double>>> node;

  std::size_t size() const { return keys.size(); }
  std::optional<std::size_t> find(const std::string &key) const;
  void rebuild_index() const;

  // Fraction of missing graph-level cells, overall or for one column.
  double graph_sparsity() const;
  double graph_sparsity(const std::string &column) const;
  // Fraction of missing per-atom entries across all node columns.
  double node_sparsity() const;

 private:
  mutable std::unordered_map<std::string, std::size_t> index_;
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t duplicates_merged = 0;
  std::size_t conflicts = 0;
  // (1-based CSV line, reason) for every row that was dropped.
  std::vector<std::pair<std::size_t, std::string>> skipped;
};

/// Reads a CSV with a header row. Missing cells are empty or NaN. Node-level
/// cells hold pipe-separated per-atom values in SMILES atom order. Rows with
/// unparseable SMILES or malformed cells are skipped and reported. Duplicate
/// molecules merge: missing entries are filled, conflicting ones keep the
/// first value and are counted.
LabelTable ingest_csv(std::istream &in, const DatasetSchema &schema,
                      IngestReport *report = nullptr);
LabelTable ingest_csv(const std::filesystem::path &path,
                      const DatasetSchema &schema,
                      IngestReport *report = nullptr);

/// Appends the rows of `other` (same columns) into `table`, merging by key.
void merge_into(LabelTable &table, const LabelTable &other,
                IngestReport *report = nullptr);

// Parses a label cell; nullopt for missing. Throws DataError otherwise.
std::optional<double> parse_label_cell(const std::string &cell);

/// Index of the replicate whose entries have maximal variance; first wins
/// on ties.
std::size_t l1000_select_signature(
    std::span<const std::vector<double>> replicates);

struct AssayFilterConfig {
  std::size_t min_labeled = 6000;  // strictly more than this
  std::size_t min_per_class = 10;
};

struct AssayDecision {
  bool keep = false;
  std::size_t labeled = 0;
  std::size_t active = 0;
  std::size_t inactive = 0;
  // 1 = Active, 0 = Inactive, NaN otherwise.
  std::vector<double> labels;
};

AssayDecision pcba_assay_filter(std::span<const std::string> raw,
                                const AssayFilterConfig &cfg = {});

/// Fits graph-level column statistics on the rows flagged in `use_row`.
feat::NormStats fit_norm(const LabelTable &table,
                         const std::vector<bool> &use_row,
                         const std::map<std::string, feat::NormKind> &kinds);

}  // namespace molmix::data
