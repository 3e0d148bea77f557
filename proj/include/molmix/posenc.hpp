// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "molmix/blob_store.hpp"
#include "molmix/matrix.hpp"
#include "molmix/molparse.hpp"

namespace molmix::pe {

// k smallest eigenpairs of the symmetric normalized Laplacian. Columns past
// num_atoms (and their eigenvalues) are zero padding.
struct LapPE {
  std::vector<double> eigvals;
  Matrix eigvecs;  // [num_atoms x k]
  int k = 0;

  bool operator==(const LapPE &) const = default;
};

// probs(v, j) = probability that a uniform random walk from v is back at v
// after steps[j] steps.
struct RWSE {
  Matrix probs;  // [num_atoms x steps.size()]
  std::vector<int> steps;

  bool operator==(const RWSE &) const = default;
};

struct PeConfig {
  int lap_k = 8;
  std::vector<int> rwse_steps { 1, 2,  3,  4,  5,  6,  7,  8,
                                9, 10, 11, 12, 13, 14, 15, 16 };

  void validate() const;
  std::string fingerprint() const;
};

// I - D^-1/2 A D^-1/2; rows/cols of isolated atoms are zero.
Matrix normalized_laplacian(const chem::MolGraph &g);

LapPE laplacian_pe(const chem::MolGraph &g, int k);
RWSE rwse(const chem::MolGraph &g, std::span<const int> steps);

// Full sign-fixed spectrum plus return-probability diagonals for steps
// 1..max_step; everything the encoders need.
struct PeIntermediates {
  std::vector<double> eigvals;          // all n, ascending
  Matrix eigvecs;                       // [n x n]
  Matrix return_probs;                  // [n x max_step]

  bool operator==(const PeIntermediates &) const = default;
};

PeIntermediates compute_intermediates(const chem::MolGraph &g, int max_step);
std::vector<std::byte> serialize(const PeIntermediates &x);
PeIntermediates deserialize_intermediates(std::span<const std::byte> bytes);

LapPE lap_from(const PeIntermediates &x, int k);
RWSE rwse_from(const PeIntermediates &x, std::span<const int> steps);

/// Disk cache of PE intermediates keyed by (canonical key, PE config).
/// Payloads are stored for the canonical atom order.
class PeCache {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  explicit PeCache(std::filesystem::path dir);

  static std::string make_key(const std::string &canonical_key,
                              const std::string &config_version);

  std::optional<std::vector<std::byte>> get(const std::string &key) const;
  void put(const std::string &key, std::span<const std::byte> payload) const;

  const BlobStore &store() const { return store_; }

 private:
  BlobStore store_;
};

struct PeResult {
  LapPE lap;
  RWSE rw;

  bool operator==(const PeResult &) const = default;
};

/// Computes both encodings. Work is done on the canonical atom order and
/// rows are mapped back, so cached and uncached results are bitwise equal.
PeResult compute_pes(const chem::MolGraph &g, const PeConfig &config,
                     const PeCache *cache = nullptr);

}  // namespace molmix::pe
