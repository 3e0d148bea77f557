// SPDX-License-Identifier: Apache-2.0

#include "molmix/posenc.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "molmix/bytes.hpp"
#include "molmix/error.hpp"

namespace molmix::pe {
namespace {

using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                  Eigen::RowMajor>;

DenseMatrix adjacency(const chem::MolGraph &g) {
  const auto n = static_cast<Eigen::Index>(g.atoms.size());
  DenseMatrix a = DenseMatrix::Zero(n, n);
  for (const auto &bd: g.bonds) {
    a(bd.begin, bd.end) = 1.0;
    a(bd.end, bd.begin) = 1.0;
  }
  return a;
}

DenseMatrix to_dense(const Matrix &m) {
  DenseMatrix out(static_cast<Eigen::Index>(m.rows),
                  static_cast<Eigen::Index>(m.cols));
  std::copy(m.data.begin(), m.data.end(), out.data());
  return out;
}

Matrix from_dense(const DenseMatrix &m) {
  Matrix out(static_cast<std::size_t>(m.rows()),
             static_cast<std::size_t>(m.cols()));
  std::copy(m.data(), m.data() + m.size(), out.data.begin());
  return out;
}

constexpr double kSignTieTol = 1e-12;

// Largest-magnitude entry made positive; near-ties go to the lowest index.
void fix_sign(DenseMatrix &vecs, Eigen::Index col) {
  const Eigen::Index n = vecs.rows();
  double best = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    best = std::max(best, std::abs(vecs(i, col)));
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(vecs(i, col)) >= best - kSignTieTol) {
      if (vecs(i, col) < 0.0) {
        vecs.col(col) *= -1.0;
      }
      return;
    }
  }
}

std::pair<std::vector<double>, DenseMatrix>
sorted_spectrum(const chem::MolGraph &g) {
  const DenseMatrix lap = to_dense(normalized_laplacian(g));
  if (lap.rows() == 0) {
    return { {}, DenseMatrix() };
  }
  Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(lap);
  if (solver.info() != Eigen::Success) {
    throw NumericError("Laplacian eigendecomposition did not converge");
  }
  DenseMatrix vecs = solver.eigenvectors();
  std::vector<double> vals(solver.eigenvalues().data(),
                           solver.eigenvalues().data() + lap.rows());
  for (Eigen::Index c = 0; c < vecs.cols(); ++c) {
    fix_sign(vecs, c);
  }
  return { std::move(vals), std::move(vecs) };
}

}  // namespace

void PeConfig::validate() const {
  if (lap_k <= 0) {
    throw ConfigError("pe.lap_k must be positive");
  }
  for (int s: rwse_steps) {
    if (s < 1) {
      throw ConfigError("pe.rwse_steps entries must be >= 1");
    }
  }
}

std::string PeConfig::fingerprint() const {
  std::string out = "pe-v1;k=" + std::to_string(lap_k) + ";steps=";
  for (int s: rwse_steps) {
    out += std::to_string(s) + ',';
  }
  return out;
}

Matrix normalized_laplacian(const chem::MolGraph &g) {
  const std::size_t n = g.atoms.size();
  std::vector<double> deg(n, 0.0);
  for (const auto &bd: g.bonds) {
    deg[bd.begin] += 1.0;
    deg[bd.end] += 1.0;
  }
  Matrix lap(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    lap(i, i) = deg[i] > 0.0 ? 1.0 : 0.0;
  }
  for (const auto &bd: g.bonds) {
    const double w = -1.0 / std::sqrt(deg[bd.begin] * deg[bd.end]);
    lap(bd.begin, bd.end) = w;
    lap(bd.end, bd.begin) = w;
  }
  return lap;
}

PeIntermediates compute_intermediates(const chem::MolGraph &g, int max_step) {
  PeIntermediates out;
  auto [vals, vecs] = sorted_spectrum(g);
  out.eigvals = std::move(vals);
  out.eigvecs = from_dense(vecs);

  const auto n = static_cast<Eigen::Index>(g.atoms.size());
  const DenseMatrix a = adjacency(g);
  DenseMatrix transition = a;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = a.row(i).sum();
    if (d > 0.0) {
      transition.row(i) /= d;
    }
  }
  out.return_probs = Matrix(static_cast<std::size_t>(n),
                            static_cast<std::size_t>(std::max(max_step, 0)));
  DenseMatrix power = DenseMatrix::Identity(n, n);
  for (int s = 1; s <= max_step; ++s) {
    power = (power * transition).eval();
    for (Eigen::Index i = 0; i < n; ++i) {
      out.return_probs(static_cast<std::size_t>(i),
                       static_cast<std::size_t>(s - 1)) = power(i, i);
    }
  }
  return out;
}

LapPE lap_from(const PeIntermediates &x, int k) {
  if (k <= 0) {
    throw ConfigError("Laplacian PE requires k >= 1");
  }
  const std::size_t n = x.eigvals.size();
  const std::size_t kk = static_cast<std::size_t>(k);
  LapPE out;
  out.k = k;
  out.eigvals.assign(kk, 0.0);
  out.eigvecs = Matrix(n, kk);
  for (std::size_t j = 0; j < std::min(n, kk); ++j) {
    out.eigvals[j] = x.eigvals[j];
    for (std::size_t i = 0; i < n; ++i) {
      out.eigvecs(i, j) = x.eigvecs(i, j);
    }
  }
  return out;
}

RWSE rwse_from(const PeIntermediates &x, std::span<const int> steps) {
  if (steps.empty()) {
    throw ConfigError("RWSE requires at least one step");
  }
  RWSE out;
  out.steps.assign(steps.begin(), steps.end());
  const std::size_t n = x.return_probs.rows;
  out.probs = Matrix(n, steps.size());
  for (std::size_t j = 0; j < steps.size(); ++j) {
    const int s = steps[j];
    if (s < 1 || static_cast<std::size_t>(s) > x.return_probs.cols) {
      throw ConfigError("RWSE step " + std::to_string(s)
                        + " outside the computed range");
    }
    for (std::size_t i = 0; i < n; ++i) {
      out.probs(i, j) = x.return_probs(i, static_cast<std::size_t>(s - 1));
    }
  }
  return out;
}

LapPE laplacian_pe(const chem::MolGraph &g, int k) {
  if (k <= 0) {
    throw ConfigError("Laplacian PE requires k >= 1");
  }
  return lap_from(compute_intermediates(g, 0), k);
}

RWSE rwse(const chem::MolGraph &g, std::span<const int> steps) {
  if (steps.empty()) {
    throw ConfigError("RWSE requires at least one step");
  }
  const int max_step = *std::max_element(steps.begin(), steps.end());
  return rwse_from(compute_intermediates(g, max_step), steps);
}

std::vector<std::byte> serialize(const PeIntermediates &x) {
  ByteWriter w;
  w.put_vector(x.eigvals);
  w.put_matrix(x.eigvecs);
  w.put_matrix(x.return_probs);
  return w.take();
}

PeIntermediates deserialize_intermediates(std::span<const std::byte> bytes) {
  ByteReader r(bytes);
  PeIntermediates x;
  x.eigvals = r.get_vector<double>();
  x.eigvecs = r.get_matrix();
  x.return_probs = r.get_matrix();
  if (!r.done()) {
    throw DataError("corrupted PE payload: trailing bytes");
  }
  return x;
}

PeCache::PeCache(std::filesystem::path dir)
    : store_(std::move(dir), { 'M', 'M', 'P', 'E', 'C', 'A', 'C', 'H' },
             kFormatVersion) { }

std::string PeCache::make_key(const std::string &canonical_key,
                              const std::string &config_version) {
  return content_key(canonical_key, config_version);
}

std::optional<std::vector<std::byte>>
PeCache::get(const std::string &key) const {
  return store_.get(key);
}

void PeCache::put(const std::string &key,
                  std::span<const std::byte> payload) const {
  store_.put(key, payload);
}

PeResult compute_pes(const chem::MolGraph &g, const PeConfig &config,
                     const PeCache *cache) {
  config.validate();
  const int max_step =
      *std::max_element(config.rwse_steps.begin(), config.rwse_steps.end());
  const auto form = chem::canonical_form(g);
  const auto canon = chem::permute_atoms(g, form.order);

  std::optional<PeIntermediates> inter;
  std::string key;
  if (cache != nullptr) {
    key = PeCache::make_key(form.key, config.fingerprint());
    if (auto bytes = cache->get(key)) {
      try {
        inter = deserialize_intermediates(*bytes);
      } catch (const DataError &) {
        inter.reset();
      }
    }
  }
  if (!inter) {
    inter = compute_intermediates(canon, max_step);
    if (cache != nullptr) {
      cache->put(key, serialize(*inter));
    }
  }

  PeResult canon_result { lap_from(*inter, config.lap_k),
                          rwse_from(*inter, config.rwse_steps) };
  // Map canonical rows back to the caller's atom order.
  PeResult out = canon_result;
  for (std::size_t c = 0; c < form.order.size(); ++c) {
    const auto orig = static_cast<std::size_t>(form.order[c]);
    std::copy(canon_result.lap.eigvecs.row(c).begin(),
              canon_result.lap.eigvecs.row(c).end(),
              out.lap.eigvecs.row(orig).begin());
    std::copy(canon_result.rw.probs.row(c).begin(),
              canon_result.rw.probs.row(c).end(),
              out.rw.probs.row(orig).begin());
  }
  return out;
}

}  // namespace molmix::pe
