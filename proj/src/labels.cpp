// SPDX-License-Identifier: Apache-2.0

#include "molmix/labels.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>

#include "molmix/csv.hpp"
#include "molmix/error.hpp"
#include "molmix/molparse.hpp"

namespace molmix::data {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool same_value(double a, double b) {
  return a == b || (std::isnan(a) && std::isnan(b));
}

std::vector<double> parse_node_cell(const std::string &cell, int atoms) {
  const std::string t = trim(cell);
  if (t.empty() || t == "NaN" || t == "nan") {
    return {};
  }
  std::vector<double> out;
  std::size_t start = 0;
  for (;;) {
    const auto bar = t.find('|', start);
    const auto v = parse_label_cell(t.substr(start, bar - start));
    out.push_back(v ? *v : kNan);
    if (bar == std::string::npos) {
      break;
    }
    start = bar + 1;
  }
  if (static_cast<int>(out.size()) != atoms) {
    throw DataError("node label has " + std::to_string(out.size())
                    + " entries for " + std::to_string(atoms) + " atoms");
  }
  return out;
}

// Fills missing entries of `dst` from `src`; returns the conflict count.
std::size_t merge_values(std::span<double> dst, std::span<const double> src) {
  std::size_t conflicts = 0;
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (std::isnan(src[i])) {
      continue;
    }
    if (std::isnan(dst[i])) {
      dst[i] = src[i];
    } else if (!same_value(dst[i], src[i])) {
      ++conflicts;
    }
  }
  return conflicts;
}

struct Row {
  std::string key;
  std::string smiles;
  int atoms = 0;
  std::vector<double> graph;
  std::vector<std::vector<double>> node;
};

void add_row(LabelTable &t, Row row, IngestReport *report) {
  if (auto at = t.find(row.key)) {
    const std::size_t r = *at;
    std::size_t conflicts = merge_values(t.graph.row(r), row.graph);
    for (std::size_t c = 0; c < row.node.size(); ++c) {
      auto &dst = t.node[r][c];
      if (row.node[c].empty()) {
        continue;
      }
      if (dst.empty()) {
        dst = row.node[c];
      } else {
        conflicts += merge_values(dst, row.node[c]) > 0 ? 1 : 0;
      }
    }
    if (report != nullptr) {
      ++report->duplicates_merged;
      report->conflicts += conflicts;
    }
    return;
  }
  t.keys.push_back(row.key);
  t.smiles.push_back(std::move(row.smiles));
  t.num_atoms.push_back(row.atoms);
  t.graph.data.insert(t.graph.data.end(), row.graph.begin(), row.graph.end());
  ++t.graph.rows;
  t.node.push_back(std::move(row.node));
  t.rebuild_index();
}

}  // namespace

std::optional<std::size_t> LabelTable::find(const std::string &key) const {
  if (index_.size() != keys.size()) {
    rebuild_index();
  }
  const auto it = index_.find(key);
  if (it == index_.end()) {
    return std::nullopt;
  }
  return it->second;
}

void LabelTable::rebuild_index() const {
  for (std::size_t i = index_.size(); i < keys.size(); ++i) {
    index_.emplace(keys[i], i);
  }
  if (index_.size() != keys.size()) {
    index_.clear();
    for (std::size_t i = 0; i < keys.size(); ++i) {
      index_.emplace(keys[i], i);
    }
  }
}

double LabelTable::graph_sparsity() const {
  if (graph.data.empty()) {
    return 0.0;
  }
  const auto missing = std::count_if(graph.data.begin(), graph.data.end(),
                                     [](double v) { return std::isnan(v); });
  return static_cast<double>(missing) / static_cast<double>(graph.data.size());
}

double LabelTable::graph_sparsity(const std::string &column) const {
  const auto it = std::find(graph_columns.begin(), graph_columns.end(), column);
  if (it == graph_columns.end()) {
    throw ConfigError("dataset '" + dataset + "' has no graph column '" + column
                      + "'");
  }
  const auto c = static_cast<std::size_t>(it - graph_columns.begin());
  if (graph.rows == 0) {
    return 0.0;
  }
  std::size_t missing = 0;
  for (std::size_t r = 0; r < graph.rows; ++r) {
    missing += std::isnan(graph(r, c)) ? 1 : 0;
  }
  return static_cast<double>(missing) / static_cast<double>(graph.rows);
}

double LabelTable::node_sparsity() const {
  std::size_t total = 0;
  std::size_t missing = 0;
  for (std::size_t r = 0; r < size(); ++r) {
    for (const auto &v: node[r]) {
      total += static_cast<std::size_t>(num_atoms[r]);
      if (v.empty()) {
        missing += static_cast<std::size_t>(num_atoms[r]);
      } else {
        missing += static_cast<std::size_t>(std::count_if(
            v.begin(), v.end(), [](double x) { return std::isnan(x); }));
      }
    }
  }
  return total == 0 ? 0.0
                    : static_cast<double>(missing) / static_cast<double>(total);
}

std::optional<double> parse_label_cell(const std::string &cell) {
  const std::string t = trim(cell);
  if (t.empty() || t == "NaN" || t == "nan" || t == "NAN" || t == "NA") {
    return std::nullopt;
  }
  errno = 0;
  char *end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE) {
    throw DataError("cannot parse label value '" + t + "'");
  }
  if (std::isnan(v)) {
    return std::nullopt;
  }
  return v;
}

LabelTable ingest_csv(std::istream &in, const DatasetSchema &schema,
                      IngestReport *report) {
  IngestReport local;
  IngestReport &rep = report != nullptr ? *report : local;
  CsvReader reader(in);
  const auto header = reader.next();
  if (!header) {
    throw DataError("dataset '" + schema.name + "': empty file");
  }
  auto column_index = [&](const std::string &name) {
    const auto it = std::find(header->begin(), header->end(), name);
    if (it == header->end()) {
      throw DataError("dataset '" + schema.name + "': column '" + name
                      + "' not in CSV header");
    }
    return static_cast<std::size_t>(it - header->begin());
  };
  const std::size_t smiles_col = column_index(schema.smiles_column);

  LabelTable t;
  t.dataset = schema.name;
  std::vector<std::size_t> graph_cols, node_cols;
  for (const auto &c: schema.columns) {
    if (c.level == Level::kGraph) {
      t.graph_columns.push_back(c.name);
      graph_cols.push_back(column_index(c.name));
    } else {
      t.node_columns.push_back(c.name);
      node_cols.push_back(column_index(c.name));
    }
  }
  t.graph = Matrix(0, graph_cols.size());

  while (auto fields = reader.next()) {
    if (fields->size() == 1 && trim((*fields)[0]).empty()) {
      continue;
    }
    ++rep.rows_read;
    const std::size_t line = reader.line();
    try {
      if (fields->size() != header->size()) {
        throw DataError("expected " + std::to_string(header->size())
                        + " fields, found " + std::to_string(fields->size()));
      }
      Row row;
      row.smiles = trim((*fields)[smiles_col]);
      const auto g = chem::parse_smiles(row.smiles);
      const auto form = chem::canonical_form(g);
      row.key = form.key;
      row.atoms = g.num_atoms();
      for (std::size_t c: graph_cols) {
        const auto v = parse_label_cell((*fields)[c]);
        row.graph.push_back(v ? *v : kNan);
      }
      for (std::size_t c: node_cols) {
        auto v = parse_node_cell((*fields)[c], row.atoms);
        if (!v.empty()) {
          std::vector<double> canon(v.size());
          for (std::size_t i = 0; i < v.size(); ++i) {
            canon[i] = v[static_cast<std::size_t>(form.order[i])];
          }
          v = std::move(canon);
        }
        row.node.push_back(std::move(v));
      }
      add_row(t, std::move(row), &rep);
    } catch (const Error &e) {
      rep.skipped.emplace_back(line, e.what());
    }
  }
  return t;
}

LabelTable ingest_csv(const std::filesystem::path &path,
                      const DatasetSchema &schema, IngestReport *report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open dataset file " + path.string());
  }
  return ingest_csv(in, schema, report);
}

void merge_into(LabelTable &table, const LabelTable &other,
                IngestReport *report) {
  if (table.graph_columns != other.graph_columns
      || table.node_columns != other.node_columns) {
    throw DataError("merge: column layout of '" + other.dataset
                    + "' differs from '" + table.dataset + "'");
  }
  for (std::size_t r = 0; r < other.size(); ++r) {
    Row row;
    row.key = other.keys[r];
    row.smiles = other.smiles[r];
    row.atoms = other.num_atoms[r];
    row.graph.assign(other.graph.row(r).begin(), other.graph.row(r).end());
    row.node = other.node[r];
    add_row(table, std::move(row), report);
  }
}

std::size_t l1000_select_signature(
    std::span<const std::vector<double>> replicates) {
  if (replicates.empty()) {
    throw DataError("signature selection needs at least one replicate");
  }
  const std::size_t dim = replicates[0].size();
  std::size_t best = 0;
  double best_var = -1.0;
  for (std::size_t i = 0; i < replicates.size(); ++i) {
    const auto &r = replicates[i];
    if (r.size() != dim || dim == 0) {
      throw DataError("replicate signatures must share a non-zero dimension");
    }
    double mean = 0.0;
    for (double v: r) {
      mean += v;
    }
    mean /= static_cast<double>(dim);
    double var = 0.0;
    for (double v: r) {
      var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(dim);
    if (var > best_var) {
      best_var = var;
      best = i;
    }
  }
  return best;
}

AssayDecision pcba_assay_filter(std::span<const std::string> raw,
                                const AssayFilterConfig &cfg) {
  AssayDecision d;
  d.labels.reserve(raw.size());
  for (const auto &s: raw) {
    const std::string t = trim(s);
    if (t == "Active") {
      d.labels.push_back(1.0);
      ++d.active;
    } else if (t == "Inactive") {
      d.labels.push_back(0.0);
      ++d.inactive;
    } else {
      d.labels.push_back(kNan);
    }
  }
  d.labeled = d.active + d.inactive;
  d.keep = d.labeled > cfg.min_labeled && d.active >= cfg.min_per_class
           && d.inactive >= cfg.min_per_class;
  return d;
}

feat::NormStats fit_norm(const LabelTable &table,
                         const std::vector<bool> &use_row,
                         const std::map<std::string, feat::NormKind> &kinds) {
  if (use_row.size() != table.size()) {
    throw ShapeError("fit_norm: row mask does not match the table");
  }
  feat::NormStats stats;
  for (const auto &[name, kind]: kinds) {
    const auto it = std::find(table.graph_columns.begin(),
                              table.graph_columns.end(), name);
    if (it == table.graph_columns.end()) {
      throw ConfigError("fit_norm: dataset '" + table.dataset
                        + "' has no graph column '" + name + "'");
    }
    const auto c = static_cast<std::size_t>(it - table.graph_columns.begin());
    std::vector<double> values;
    for (std::size_t r = 0; r < table.size(); ++r) {
      if (use_row[r]) {
        values.push_back(table.graph(r, c));
      }
    }
    stats.labels.push_back(
        feat::fit_norm_column(name, values, kind, &stats.warnings));
  }
  return stats;
}

}  // namespace molmix::data
