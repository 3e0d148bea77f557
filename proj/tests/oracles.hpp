// SPDX-License-Identifier: Apache-2.0

// Gradcheck case tables, dense layer oracles and brute-force metric
// definitions shared by the unit tests and the acceptance binary.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "molmix/gnn.hpp"
#include "molmix/molparse.hpp"
#include "molmix/task.hpp"
#include "molmix/tensor.hpp"

namespace molmix::testing {

using V = ad::Var<double>;
using Tape = ad::Tape<double>;
using Inputs = std::span<const V>;
using ad::Shape;
using ad::TensorValue;

// Random data kept away from kinks (|x| >= 0.05) so central differences
// stay valid for relu and abs.
inline TensorValue random_tensor(std::mt19937_64 &rng, Shape s, double lo = -2.0,
                          double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  TensorValue t { s, std::vector<double>(s.size()) };
  for (auto &x: t.data) {
    do {
      x = u(rng);
    } while (std::abs(x) < 0.05);
  }
  return t;
}

struct PrimitiveCase {
  const char *name;
  std::function<std::vector<TensorValue>(std::mt19937_64 &)> make;
  std::function<V(Tape &, Inputs)> op;
};

inline std::size_t random_dim(std::mt19937_64 &rng) {
  return std::uniform_int_distribution<std::size_t>(1, 4)(rng);
}

inline std::vector<PrimitiveCase> primitive_cases() {
  auto unary = [](double lo, double hi) {
    return [lo, hi](std::mt19937_64 &rng) {
      return std::vector<TensorValue> {
        random_tensor(rng, { random_dim(rng), random_dim(rng) }, lo, hi) };
    };
  };
  auto same_pair = [](std::mt19937_64 &rng) {
    const Shape s { random_dim(rng), random_dim(rng) };
    return std::vector<TensorValue> { random_tensor(rng, s),
                                      random_tensor(rng, s) };
  };
  auto row_pair = [](std::mt19937_64 &rng) {
    const Shape s { random_dim(rng), random_dim(rng) };
    return std::vector<TensorValue> { random_tensor(rng, s),
                                      random_tensor(rng, { 1, s.cols }) };
  };
  auto scalar_pair = [](std::mt19937_64 &rng) {
    const Shape s { random_dim(rng), random_dim(rng) };
    return std::vector<TensorValue> { random_tensor(rng, s),
                                      random_tensor(rng, { 1, 1 }) };
  };
  const std::vector<int> ids { 2, 0, 2, 1, 0, 3 };
  std::vector<PrimitiveCase> cases {
    { "matmul",
      [](std::mt19937_64 &rng) {
        const auto m = random_dim(rng), k = random_dim(rng), n = random_dim(rng);
        return std::vector<TensorValue> { random_tensor(rng, { m, k }),
                                          random_tensor(rng, { k, n }) };
      },
      [](Tape &, Inputs x) { return ad::matmul(x[0], x[1]); } },
    { "add", same_pair, [](Tape &, Inputs x) { return x[0] + x[1]; } },
    { "add_row", row_pair,
      [](Tape &, Inputs x) { return ad::add(x[0], x[1]); } },
    { "sub_scalar", scalar_pair,
      [](Tape &, Inputs x) { return x[0] - x[1]; } },
    { "mul", same_pair, [](Tape &, Inputs x) { return x[0] * x[1]; } },
    { "mul_row", row_pair,
      [](Tape &, Inputs x) { return ad::mul(x[0], x[1]); } },
    { "mul_scalar", scalar_pair,
      [](Tape &, Inputs x) { return ad::mul(x[0], x[1]); } },
    { "scale", unary(-2, 2),
      [](Tape &, Inputs x) { return ad::scale(x[0], -1.7); } },
    { "relu", unary(-2, 2),
      [](Tape &, Inputs x) { return ad::relu(x[0]); } },
    { "sigmoid", unary(-4, 4),
      [](Tape &, Inputs x) { return ad::sigmoid(x[0]); } },
    { "log", unary(0.1, 3),
      [](Tape &, Inputs x) { return ad::log(x[0]); } },
    { "exp", unary(-2, 2),
      [](Tape &, Inputs x) { return ad::exp(x[0]); } },
    { "square", unary(-2, 2),
      [](Tape &, Inputs x) { return ad::square(x[0]); } },
    { "abs", unary(-2, 2),
      [](Tape &, Inputs x) { return ad::abs(x[0]); } },
    { "concat",
      [](std::mt19937_64 &rng) {
        const auto r = random_dim(rng);
        return std::vector<TensorValue> { random_tensor(rng, { r, random_dim(rng) }),
                                          random_tensor(rng, { r, random_dim(rng) }),
                                          random_tensor(rng, { r, random_dim(rng) }) };
      },
      [](Tape &, Inputs x) { return ad::concat(x); } },
    { "row_softmax", unary(-3, 3),
      [](Tape &, Inputs x) { return ad::row_softmax(x[0]); } },
    { "gather_rows",
      [](std::mt19937_64 &rng) {
        return std::vector<TensorValue> { random_tensor(rng, { 4, random_dim(rng) }) };
      },
      [ids](Tape &, Inputs x) { return ad::gather_rows<double>(x[0], ids); } },
    { "segment_sum",
      [](std::mt19937_64 &rng) {
        return std::vector<TensorValue> { random_tensor(rng, { 6, random_dim(rng) }) };
      },
      [ids](Tape &, Inputs x) {
        return ad::segment_sum<double>(x[0], ids, 5);
      } },
    { "segment_mean",
      [](std::mt19937_64 &rng) {
        return std::vector<TensorValue> { random_tensor(rng, { 6, random_dim(rng) }) };
      },
      [ids](Tape &, Inputs x) {
        return ad::segment_mean<double>(x[0], ids, 5);
      } },
    { "row_scale",
      [](std::mt19937_64 &rng) {
        const auto r = random_dim(rng);
        return std::vector<TensorValue> { random_tensor(rng, { r, random_dim(rng) }),
                                          random_tensor(rng, { r, 1 }) };
      },
      [](Tape &, Inputs x) { return ad::row_scale(x[0], x[1]); } },
    { "reshape",
      [](std::mt19937_64 &rng) {
        return std::vector<TensorValue> { random_tensor(rng, { 2, 6 }) };
      },
      [](Tape &, Inputs x) { return ad::reshape(x[0], { 3, 4 }); } },
    { "reduce_sum_all", unary(-2, 2),
      [](Tape &, Inputs x) { return ad::reduce_sum(x[0]); } },
    { "reduce_sum_0", unary(-2, 2),
      [](Tape &, Inputs x) { return ad::reduce_sum(x[0], 0); } },
    { "reduce_mean_1", unary(-2, 2),
      [](Tape &, Inputs x) { return ad::reduce_mean(x[0], 1); } },
    { "reduce_mean_all", unary(-2, 2),
      [](Tape &, Inputs x) { return ad::reduce_mean(x[0]); } },
  };
  return cases;
}

struct SmallGraph {
  std::size_t n = 0;
  std::vector<int> src, dst;
  std::vector<std::vector<double>> adj;  // dense symmetric adjacency
};

inline SmallGraph graph_of(const chem::MolGraph &g) {
  SmallGraph s;
  s.n = static_cast<std::size_t>(g.num_atoms());
  s.adj.assign(s.n, std::vector<double>(s.n, 0.0));
  for (const auto &b: g.bonds) {
    s.src.push_back(b.begin);
    s.dst.push_back(b.end);
    s.src.push_back(b.end);
    s.dst.push_back(b.begin);
    s.adj[b.begin][b.end] = s.adj[b.end][b.begin] = 1.0;
  }
  return s;
}

using Dense = std::vector<std::vector<double>>;

inline Dense random_dense(std::size_t r, std::size_t c, std::mt19937_64 &rng,
                          double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Dense m(r, std::vector<double>(c));
  for (auto &row: m) {
    for (auto &x: row) {
      x = u(rng);
    }
  }
  return m;
}

inline Dense dense_mul(const Dense &a, const Dense &b) {
  Dense out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      for (std::size_t j = 0; j < b[0].size(); ++j) {
        out[i][j] += a[i][k] * b[k][j];
      }
    }
  }
  return out;
}

inline Dense dense_relu(Dense m) {
  for (auto &row: m) {
    for (auto &x: row) {
      x = std::max(x, 0.0);
    }
  }
  return m;
}

inline Dense add_row(Dense m, const std::vector<double> &b) {
  for (auto &row: m) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] += b[j];
    }
  }
  return m;
}

inline std::vector<double> flat(const Dense &m) {
  std::vector<double> out;
  for (const auto &row: m) {
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

inline gnn::EdgeList edges_of(const SmallGraph &g) {
  return { g.src, g.dst, g.n };
}

// Weighted sum of every output entry with fixed random weights.
inline V contract(const V &out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(out.shape().size());
  for (auto &x: w) {
    x = u(rng);
  }
  return ad::reduce_sum(ad::mul(out, out.tape()->constant(out.shape(), std::move(w))));
}

inline TensorValue tv(const Dense &m) {
  return { { m.size(), m[0].size() }, flat(m) };
}

struct GradcheckCase {
  std::string name;
  std::function<void(std::mt19937_64 &, const SmallGraph &, std::vector<TensorValue> &)>
      inputs;
  std::function<V(Tape &, std::span<const V>, const SmallGraph &)> fn;
};

inline std::vector<GradcheckCase> layer_cases() {
  std::vector<GradcheckCase> cases;
  cases.push_back({ "gcn",
                    [](auto &rng, const auto &g, auto &in) {
                      in.push_back(tv(random_dense(g.n, 3, rng)));
                      in.push_back(tv(random_dense(3, 4, rng)));
                    },
                    [](Tape &, std::span<const V> x, const SmallGraph &g) {
                      return gnn::gcn_layer(x[0], edges_of(g), x[1]);
                    } });
  cases.push_back({ "gin",
                    [](auto &rng, const auto &g, auto &in) {
                      in.push_back(tv(random_dense(g.n, 3, rng)));
                      in.push_back(tv(random_dense(1, 1, rng)));
                      in.push_back(tv(random_dense(3, 4, rng)));
                      in.push_back(tv(random_dense(1, 4, rng)));
                      in.push_back(tv(random_dense(4, 2, rng)));
                      in.push_back(tv(random_dense(1, 2, rng)));
                    },
                    [](Tape &, std::span<const V> x, const SmallGraph &g) {
                      const gnn::Linear l[] = { { x[2], x[3] }, { x[4], x[5] } };
                      return gnn::gin_layer(x[0], edges_of(g), x[1], l);
                    } });
  cases.push_back({ "gine",
                    [](auto &rng, const auto &g, auto &in) {
                      in.push_back(tv(random_dense(g.n, 3, rng)));
                      in.push_back(tv(random_dense(std::max<std::size_t>(g.src.size(), 1), 2, rng)));
                      in.push_back(tv(random_dense(1, 1, rng)));
                      in.push_back(tv(random_dense(2, 3, rng)));
                      in.push_back(tv(random_dense(1, 3, rng)));
                      in.push_back(tv(random_dense(3, 4, rng)));
                      in.push_back(tv(random_dense(1, 4, rng)));
                    },
                    [](Tape &t, std::span<const V> x, const SmallGraph &g) {
                      const gnn::Linear l[] = { { x[5], x[6] } };
                      V e = x[1];
                      if (g.src.empty()) {
                        e = t.constant({ 0, 2 }, {});
                      }
                      return gnn::gine_layer(x[0], e, edges_of(g), x[2], { x[3], x[4] }, l);
                    } });
  cases.push_back({ "mlp",
                    [](auto &rng, const auto &g, auto &in) {
                      in.push_back(tv(random_dense(g.n, 3, rng)));
                      in.push_back(tv(random_dense(3, 5, rng)));
                      in.push_back(tv(random_dense(1, 5, rng)));
                      in.push_back(tv(random_dense(5, 2, rng)));
                      in.push_back(tv(random_dense(1, 2, rng)));
                    },
                    [](Tape &, std::span<const V> x, const SmallGraph &) {
                      const gnn::Linear l[] = { { x[1], x[2] }, { x[3], x[4] } };
                      return gnn::mlp(x[0], l, true);
                    } });
  cases.push_back({ "pool",
                    [](auto &rng, const auto &g, auto &in) {
                      in.push_back(tv(random_dense(g.n, 3, rng)));
                      in.push_back(tv(random_dense(g.n, 1, rng)));
                    },
                    [](Tape &, std::span<const V> x, const SmallGraph &g) {
                      std::vector<int> ids(g.n);
                      for (std::size_t i = 0; i < g.n; ++i) {
                        ids[i] = static_cast<int>(i % 2);
                      }
                      return gnn::pool(x[0], ids, x[1], 2);
                    } });
  return cases;
}

inline double filtered_loss(const std::vector<double> &p, const std::vector<double> &y,
                     LossKind kind) {
  double s = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (std::isnan(y[i])) {
      continue;
    }
    ++n;
    if (kind == LossKind::kMae) {
      s += std::abs(p[i] - y[i]);
    } else {
      s -= y[i] * std::log(p[i]) + (1.0 - y[i]) * std::log(1.0 - p[i]);
    }
  }
  return s / n;
}

// All-pairs definition of AUROC.
inline double brute_auroc(const std::vector<double> &p, const std::vector<double> &y) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (y[i] == 1.0 && y[j] == 0.0) {
        pairs += 1.0;
        num += p[i] > p[j] ? 1.0 : (p[i] == p[j] ? 0.5 : 0.0);
      }
    }
  }
  return num / pairs;
}

// Precision at each positive, where an item ranks at or above i when its
// score is higher or equal with a lower or equal index.
inline double brute_ap(const std::vector<double> &p, const std::vector<double> &y) {
  double sum = 0.0, pos = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] != 1.0) {
      continue;
    }
    pos += 1.0;
    double above = 0.0, tp = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (p[j] > p[i] || (p[j] == p[i] && j <= i)) {
        above += 1.0;
        tp += y[j];
      }
    }
    sum += tp / above;
  }
  return sum / pos;
}

// Hand-counted heavy atoms, bonds, rings (cycle rank) and components.
struct GoldenMolecule {
  const char *smiles;
  int atoms;
  int bonds;
  int rings;
  int components;
};

inline const std::vector<GoldenMolecule> &golden_corpus() {
  static const std::vector<GoldenMolecule> corpus {
    { "C", 1, 0, 0, 1 },
    { "CCO", 3, 2, 0, 1 },
    { "CC(=O)O", 4, 3, 0, 1 },
    { "C#N", 2, 1, 0, 1 },
    { "O=C=O", 3, 2, 0, 1 },
    { "CC(C)(C)C", 5, 4, 0, 1 },
    { "[NH4+]", 1, 0, 0, 1 },
    { "[Na+].[Cl-]", 2, 0, 0, 2 },
    { "c1ccccc1", 6, 6, 1, 1 },
    { "C1CCCCC1", 6, 6, 1, 1 },
    { "c1ccncc1", 6, 6, 1, 1 },
    { "c1ccc2ccccc2c1", 10, 11, 2, 1 },
    { "CC(=O)Oc1ccccc1C(=O)O", 13, 13, 1, 1 },
    { "CN1C=NC2=C1C(=O)N(C(=O)N2C)C", 14, 15, 2, 1 },
    { "C1CC2CCC1C2", 7, 8, 2, 1 },
    { "c1ccc(cc1)-c1ccccc1", 12, 13, 2, 1 },
    { "C1CC1CC1CC1", 7, 8, 2, 1 },
    { "C12C3C4C1C5C2C3C45", 8, 12, 5, 1 },
    { "c1ccc2c(c1)[nH]c1ccccc12", 13, 15, 3, 1 },
    { "C1CCC2(CC1)CCCC2", 10, 11, 2, 1 },
  };
  return corpus;
}

}  // namespace molmix::testing
