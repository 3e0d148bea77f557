// SPDX-License-Identifier: Apache-2.0

#include "molmix/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace molmix::ad {

std::string to_string(const Shape &s) {
  return "[" + std::to_string(s.rows) + " x " + std::to_string(s.cols) + "]";
}

// ---- Var -----------------------------------------------------------------

template <class T>
const Shape &Var<T>::shape() const {
  return tape_->shape(id_);
}

template <class T>
std::span<const T> Var<T>::value() const {
  return tape_->value(id_);
}

template <class T>
std::span<const T> Var<T>::grad() const {
  return tape_->grad(id_);
}

template <class T>
T Var<T>::item() const {
  if (shape().size() != 1) {
    throw ShapeError("item() on non-scalar " + to_string(shape()));
  }
  return value()[0];
}

template <class T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

// ---- Tape ----------------------------------------------------------------

template <class T>
Var<T> Tape<T>::leaf(Shape shape, std::vector<T> data, bool requires_grad) {
  if (data.size() != shape.size()) {
    throw ShapeError("leaf data length " + std::to_string(data.size())
                     + " does not match " + to_string(shape));
  }
  if (consumed_) {
    throw Error(ErrorCategory::kInternal, "tape already differentiated");
  }
  nodes_.push_back(Node { shape, std::move(data), {}, requires_grad, {} });
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
Var<T> Tape<T>::constant(Shape shape, std::vector<T> data) {
  return leaf(shape, std::move(data), false);
}

template <class T>
Var<T> Tape<T>::record(Shape shape, std::vector<T> value,
                       std::span<const Var<T>> inputs, BackwardFn fn) {
  if (consumed_) {
    throw Error(ErrorCategory::kInternal, "tape already differentiated");
  }
  bool needs = false;
  for (const auto &in: inputs) {
    if (in.tape() != this) {
      throw ShapeError("op mixes variables from different tapes");
    }
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(
      Node { shape, std::move(value), {}, needs, needs ? std::move(fn) : nullptr });
  return Var<T>(this, nodes_.size() - 1);
}

template <class T>
std::span<T> Tape<T>::grad_sink(std::size_t id) {
  Node &n = nodes_[id];
  if (!n.requires_grad) {
    return {};
  }
  return n.grad;
}

template <class T>
void Tape<T>::backward(const Var<T> &loss) {
  if (loss.tape() != this) {
    throw ShapeError("backward: loss belongs to another tape");
  }
  if (consumed_) {
    throw Error(ErrorCategory::kInternal,
                "backward called twice on the same tape");
  }
  if (nodes_[loss.id()].shape.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got "
                     + to_string(nodes_[loss.id()].shape));
  }
  consumed_ = true;
  for (auto &n: nodes_) {
    if (n.requires_grad) {
      n.grad.assign(n.value.size(), T(0));
    }
  }
  if (!nodes_[loss.id()].requires_grad) {
    return;
  }
  nodes_[loss.id()].grad[0] = T(1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    if (nodes_[i].requires_grad && nodes_[i].backward) {
      nodes_[i].backward(*this, i);
    }
  }
}

// ---- Primitive helpers ---------------------------------------------------

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ConstMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MutMap = Eigen::Map<RowMat<T>>;

template <class T>
ConstMap<T> as_matrix(std::span<const T> data, const Shape &s) {
  return ConstMap<T>(data.data(), static_cast<Eigen::Index>(s.rows),
                     static_cast<Eigen::Index>(s.cols));
}

template <class T>
MutMap<T> as_matrix(std::span<T> data, const Shape &s) {
  return MutMap<T>(data.data(), static_cast<Eigen::Index>(s.rows),
                   static_cast<Eigen::Index>(s.cols));
}

enum class Broadcast {
  kNone,
  kRow,
  kScalar,
};

Broadcast broadcast_kind(const Shape &a, const Shape &b, const char *op) {
  if (a == b) {
    return Broadcast::kNone;
  }
  if (b.rows == 1 && b.cols == 1) {
    return Broadcast::kScalar;
  }
  if (b.rows == 1 && b.cols == a.cols) {
    return Broadcast::kRow;
  }
  throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(b)
                   + " onto " + to_string(a));
}

inline std::size_t bindex(Broadcast kind, std::size_t i, std::size_t cols) {
  switch (kind) {
  case Broadcast::kNone: return i;
  case Broadcast::kRow: return i % cols;
  case Broadcast::kScalar: return 0;
  }
  return i;
}

template <class T, class Fwd, class Bwd>
Var<T> elementwise(const Var<T> &a, Fwd fwd, Bwd dfdx) {
  Tape<T> &tape = *a.tape();
  const auto x = a.value();
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = fwd(x[i]);
  }
  const std::size_t ia = a.id();
  return tape.record(a.shape(), std::move(y), { a },
                     [ia, dfdx](Tape<T> &t, std::size_t self) {
                       auto ga = t.grad_sink(ia);
                       if (ga.empty()) {
                         return;
                       }
                       const auto x = t.value(ia);
                       const auto y = t.value(self);
                       const auto g = t.grad(self);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         ga[i] += g[i] * dfdx(x[i], y[i]);
                       }
                     });
}

}  // namespace

// ---- Primitives ----------------------------------------------------------

template <class T>
Var<T> matmul(const Var<T> &a, const Var<T> &b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.cols != sb.rows) {
    throw ShapeError("matmul: " + to_string(sa) + " x " + to_string(sb));
  }
  const Shape so { sa.rows, sb.cols };
  std::vector<T> out(so.size());
  as_matrix<T>(std::span<T>(out), so).noalias() =
      as_matrix<T>(a.value(), sa) * as_matrix<T>(b.value(), sb);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape()->record(
      so, std::move(out), { a, b },
      [ia, ib, sa, sb, so](Tape<T> &t, std::size_t self) {
        const auto g = as_matrix<T>(t.grad(self), so);
        if (auto ga = t.grad_sink(ia); !ga.empty()) {
          as_matrix<T>(ga, sa).noalias() +=
              g * as_matrix<T>(t.value(ib), sb).transpose();
        }
        if (auto gb = t.grad_sink(ib); !gb.empty()) {
          as_matrix<T>(gb, sb).noalias() +=
              as_matrix<T>(t.value(ia), sa).transpose() * g;
        }
      });
}

template <class T>
Var<T> add(const Var<T> &a, const Var<T> &b) {
  const Shape sa = a.shape();
  const Broadcast kind = broadcast_kind(sa, b.shape(), "add");
  const auto x = a.value();
  const auto y = b.value();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] + y[bindex(kind, i, sa.cols)];
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape()->record(sa, std::move(out), { a, b },
                          [ia, ib, kind, sa](Tape<T> &t, std::size_t self) {
                            const auto g = t.grad(self);
                            if (auto ga = t.grad_sink(ia); !ga.empty()) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                ga[i] += g[i];
                              }
                            }
                            if (auto gb = t.grad_sink(ib); !gb.empty()) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                gb[bindex(kind, i, sa.cols)] += g[i];
                              }
                            }
                          });
}

template <class T>
Var<T> sub(const Var<T> &a, const Var<T> &b) {
  const Shape sa = a.shape();
  const Broadcast kind = broadcast_kind(sa, b.shape(), "sub");
  const auto x = a.value();
  const auto y = b.value();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] - y[bindex(kind, i, sa.cols)];
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape()->record(sa, std::move(out), { a, b },
                          [ia, ib, kind, sa](Tape<T> &t, std::size_t self) {
                            const auto g = t.grad(self);
                            if (auto ga = t.grad_sink(ia); !ga.empty()) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                ga[i] += g[i];
                              }
                            }
                            if (auto gb = t.grad_sink(ib); !gb.empty()) {
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                gb[bindex(kind, i, sa.cols)] -= g[i];
                              }
                            }
                          });
}

template <class T>
Var<T> mul(const Var<T> &a, const Var<T> &b) {
  const Shape sa = a.shape();
  const Broadcast kind = broadcast_kind(sa, b.shape(), "mul");
  const auto x = a.value();
  const auto y = b.value();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] * y[bindex(kind, i, sa.cols)];
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape()->record(
      sa, std::move(out), { a, b },
      [ia, ib, kind, sa](Tape<T> &t, std::size_t self) {
        const auto g = t.grad(self);
        const auto x = t.value(ia);
        const auto y = t.value(ib);
        if (auto ga = t.grad_sink(ia); !ga.empty()) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * y[bindex(kind, i, sa.cols)];
          }
        }
        if (auto gb = t.grad_sink(ib); !gb.empty()) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            gb[bindex(kind, i, sa.cols)] += g[i] * x[i];
          }
        }
      });
}

template <class T>
Var<T> scale(const Var<T> &a, T factor) {
  return elementwise(
      a, [factor](T x) { return x * factor; },
      [factor](T, T) { return factor; });
}

template <class T>
Var<T> relu(const Var<T> &a) {
  return elementwise(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> sigmoid(const Var<T> &a) {
  return elementwise(
      a,
      [](T x) {
        if (x >= T(0)) {
          return T(1) / (T(1) + std::exp(-x));
        }
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> log(const Var<T> &a) {
  return elementwise(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Var<T> exp(const Var<T> &a) {
  return elementwise(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Var<T> square(const Var<T> &a) {
  return elementwise(
      a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <class T>
Var<T> abs(const Var<T> &a) {
  return elementwise(
      a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <class T>
Var<T> unary_map(const Var<T> &a, const std::function<T(T)> &f,
                 const std::function<T(T)> &df) {
  return elementwise(
      a, [f](T x) { return f(x); }, [df](T x, T) { return df(x); });
}

template <class T>
Var<T> concat(std::span<const Var<T>> parts) {
  if (parts.empty()) {
    throw ShapeError("concat of zero tensors");
  }
  const std::size_t rows = parts[0].shape().rows;
  std::size_t cols = 0;
  for (const auto &p: parts) {
    if (p.shape().rows != rows) {
      throw ShapeError("concat: row mismatch " + to_string(p.shape()));
    }
    if (p.tape() != parts[0].tape()) {
      throw ShapeError("concat mixes variables from different tapes");
    }
    cols += p.shape().cols;
  }
  std::vector<T> out(rows * cols);
  std::vector<std::size_t> ids;
  std::vector<Shape> shapes;
  std::size_t off = 0;
  for (const auto &p: parts) {
    const Shape s = p.shape();
    const auto v = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.data() + r * s.cols, s.cols, out.data() + r * cols + off);
    }
    off += s.cols;
    ids.push_back(p.id());
    shapes.push_back(s);
  }
  auto fn = [ids, shapes, rows, cols](Tape<T> &t, std::size_t self) {
    const auto g = t.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t c = shapes[k].cols;
      if (auto gk = t.grad_sink(ids[k]); !gk.empty()) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < c; ++j) {
            gk[r * c + j] += g[r * cols + off + j];
          }
        }
      }
      off += c;
    }
  };
  return parts[0].tape()->record({ rows, cols }, std::move(out), parts,
                                 std::move(fn));
}

template <class T>
Var<T> row_softmax(const Var<T> &a) {
  const Shape s = a.shape();
  const auto x = a.value();
  std::vector<T> y(x.size());
  for (std::size_t r = 0; r < s.rows; ++r) {
    const T *row = x.data() + r * s.cols;
    T *out = y.data() + r * s.cols;
    const T mx = *std::max_element(row, row + s.cols);
    T sum = T(0);
    for (std::size_t c = 0; c < s.cols; ++c) {
      out[c] = std::exp(row[c] - mx);
      sum += out[c];
    }
    for (std::size_t c = 0; c < s.cols; ++c) {
      out[c] /= sum;
    }
  }
  const std::size_t ia = a.id();
  return a.tape()->record(s, std::move(y), { a },
                          [ia, s](Tape<T> &t, std::size_t self) {
                            auto ga = t.grad_sink(ia);
                            if (ga.empty()) {
                              return;
                            }
                            const auto y = t.value(self);
                            const auto g = t.grad(self);
                            for (std::size_t r = 0; r < s.rows; ++r) {
                              const std::size_t o = r * s.cols;
                              T dot = T(0);
                              for (std::size_t c = 0; c < s.cols; ++c) {
                                dot += g[o + c] * y[o + c];
                              }
                              for (std::size_t c = 0; c < s.cols; ++c) {
                                ga[o + c] += y[o + c] * (g[o + c] - dot);
                              }
                            }
                          });
}

template <class T>
Var<T> gather_rows(const Var<T> &a, std::span<const int> indices) {
  const Shape s = a.shape();
  const auto x = a.value();
  std::vector<int> idx(indices.begin(), indices.end());
  std::vector<T> out(idx.size() * s.cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= s.rows) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[r])
                       + " out of bounds for " + to_string(s));
    }
    std::copy_n(x.data() + idx[r] * s.cols, s.cols, out.data() + r * s.cols);
  }
  const std::size_t ia = a.id();
  const Shape so { idx.size(), s.cols };
  return a.tape()->record(so, std::move(out), { a },
                          [ia, s, idx = std::move(idx)](Tape<T> &t,
                                                        std::size_t self) {
                            auto ga = t.grad_sink(ia);
                            if (ga.empty()) {
                              return;
                            }
                            const auto g = t.grad(self);
                            for (std::size_t r = 0; r < idx.size(); ++r) {
                              T *dst = ga.data() + idx[r] * s.cols;
                              const T *src = g.data() + r * s.cols;
                              for (std::size_t c = 0; c < s.cols; ++c) {
                                dst[c] += src[c];
                              }
                            }
                          });
}

namespace {

template <class T>
Var<T> segment_reduce(const Var<T> &a, std::span<const int> segment_ids,
                      std::size_t num_segments, bool mean) {
  const Shape s = a.shape();
  if (segment_ids.size() != s.rows) {
    throw ShapeError("segment op: " + std::to_string(segment_ids.size())
                     + " ids for " + to_string(s));
  }
  std::vector<int> ids(segment_ids.begin(), segment_ids.end());
  std::vector<T> weight(s.rows, T(1));
  if (mean) {
    std::vector<std::size_t> count(num_segments, 0);
    for (int id: ids) {
      if (id >= 0 && static_cast<std::size_t>(id) < num_segments) {
        ++count[id];
      }
    }
    for (std::size_t r = 0; r < s.rows; ++r) {
      if (ids[r] >= 0 && static_cast<std::size_t>(ids[r]) < num_segments) {
        weight[r] = T(1) / static_cast<T>(count[ids[r]]);
      }
    }
  }
  const auto x = a.value();
  std::vector<T> out(num_segments * s.cols, T(0));
  for (std::size_t r = 0; r < s.rows; ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= num_segments) {
      throw ShapeError("segment op: id " + std::to_string(ids[r])
                       + " outside [0, " + std::to_string(num_segments) + ")");
    }
    T *dst = out.data() + ids[r] * s.cols;
    const T *src = x.data() + r * s.cols;
    for (std::size_t c = 0; c < s.cols; ++c) {
      dst[c] += weight[r] * src[c];
    }
  }
  const std::size_t ia = a.id();
  return a.tape()->record(
      { num_segments, s.cols }, std::move(out), { a },
      [ia, s, ids = std::move(ids), weight = std::move(weight)](
          Tape<T> &t, std::size_t self) {
        auto ga = t.grad_sink(ia);
        if (ga.empty()) {
          return;
        }
        const auto g = t.grad(self);
        for (std::size_t r = 0; r < s.rows; ++r) {
          const T *src = g.data() + ids[r] * s.cols;
          T *dst = ga.data() + r * s.cols;
          for (std::size_t c = 0; c < s.cols; ++c) {
            dst[c] += weight[r] * src[c];
          }
        }
      });
}

}  // namespace

template <class T>
Var<T> segment_sum(const Var<T> &a, std::span<const int> segment_ids,
                   std::size_t num_segments) {
  return segment_reduce(a, segment_ids, num_segments, false);
}

template <class T>
Var<T> segment_mean(const Var<T> &a, std::span<const int> segment_ids,
                    std::size_t num_segments) {
  return segment_reduce(a, segment_ids, num_segments, true);
}

template <class T>
Var<T> row_scale(const Var<T> &a, const Var<T> &w) {
  const Shape s = a.shape();
  if (w.shape() != Shape { s.rows, 1 }) {
    throw ShapeError("row_scale: weights " + to_string(w.shape()) + " for "
                     + to_string(s));
  }
  const auto x = a.value();
  const auto wv = w.value();
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < s.rows; ++r) {
    for (std::size_t c = 0; c < s.cols; ++c) {
      out[r * s.cols + c] = x[r * s.cols + c] * wv[r];
    }
  }
  const std::size_t ia = a.id();
  const std::size_t iw = w.id();
  return a.tape()->record(
      s, std::move(out), { a, w }, [ia, iw, s](Tape<T> &t, std::size_t self) {
        const auto g = t.grad(self);
        if (auto ga = t.grad_sink(ia); !ga.empty()) {
          const auto wv = t.value(iw);
          for (std::size_t r = 0; r < s.rows; ++r) {
            for (std::size_t c = 0; c < s.cols; ++c) {
              ga[r * s.cols + c] += g[r * s.cols + c] * wv[r];
            }
          }
        }
        if (auto gw = t.grad_sink(iw); !gw.empty()) {
          const auto x = t.value(ia);
          for (std::size_t r = 0; r < s.rows; ++r) {
            T acc = T(0);
            for (std::size_t c = 0; c < s.cols; ++c) {
              acc += g[r * s.cols + c] * x[r * s.cols + c];
            }
            gw[r] += acc;
          }
        }
      });
}

template <class T>
Var<T> reshape(const Var<T> &a, Shape shape) {
  if (shape.size() != a.shape().size()) {
    throw ShapeError("reshape " + to_string(a.shape()) + " to "
                     + to_string(shape));
  }
  const auto x = a.value();
  const std::size_t ia = a.id();
  return a.tape()->record(shape, std::vector<T>(x.begin(), x.end()), { a },
                          [ia](Tape<T> &t, std::size_t self) {
                            auto ga = t.grad_sink(ia);
                            if (ga.empty()) {
                              return;
                            }
                            const auto g = t.grad(self);
                            for (std::size_t i = 0; i < g.size(); ++i) {
                              ga[i] += g[i];
                            }
                          });
}

namespace {

template <class T>
Var<T> reduce(const Var<T> &a, int axis, bool mean) {
  const Shape s = a.shape();
  Shape so;
  if (axis < 0) {
    so = { 1, 1 };
  } else if (axis == 0) {
    so = { 1, s.cols };
  } else if (axis == 1) {
    so = { s.rows, 1 };
  } else {
    throw ShapeError("reduce: axis must be -1, 0 or 1");
  }
  const T count = static_cast<T>(
      axis < 0 ? s.size() : (axis == 0 ? s.rows : s.cols));
  const T w = mean ? (count > T(0) ? T(1) / count : T(0)) : T(1);
  auto target = [axis, s](std::size_t i) -> std::size_t {
    if (axis < 0) {
      return 0;
    }
    return axis == 0 ? i % s.cols : i / s.cols;
  };
  const auto x = a.value();
  std::vector<T> out(so.size(), T(0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[target(i)] += x[i];
  }
  if (mean) {
    for (auto &v: out) {
      v *= w;
    }
  }
  const std::size_t ia = a.id();
  return a.tape()->record(so, std::move(out), { a },
                          [ia, w, target](Tape<T> &t, std::size_t self) {
                            auto ga = t.grad_sink(ia);
                            if (ga.empty()) {
                              return;
                            }
                            const auto g = t.grad(self);
                            for (std::size_t i = 0; i < ga.size(); ++i) {
                              ga[i] += w * g[target(i)];
                            }
                          });
}

}  // namespace

template <class T>
Var<T> reduce_sum(const Var<T> &a, int axis) {
  return reduce(a, axis, false);
}

template <class T>
Var<T> reduce_mean(const Var<T> &a, int axis) {
  return reduce(a, axis, true);
}

// ---- Gradcheck -----------------------------------------------------------

GradcheckReport gradcheck(const ScalarFn &fn,
                          const std::vector<TensorValue> &inputs, double h,
                          double tol) {
  GradcheckReport report;
  std::vector<std::vector<double>> analytic;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto &in: inputs) {
      vars.push_back(tape.leaf(in.shape, in.data));
    }
    const Var<double> loss = fn(tape, vars);
    tape.backward(loss);
    for (const auto &v: vars) {
      analytic.emplace_back(v.grad().begin(), v.grad().end());
    }
  }

  auto evaluate = [&](const std::vector<TensorValue> &xs) {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto &in: xs) {
      vars.push_back(tape.leaf(in.shape, in.data));
    }
    return fn(tape, vars).item();
  };

  std::vector<TensorValue> probe = inputs;
  report.passed = true;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<double> errs(inputs[k].data.size());
    for (std::size_t i = 0; i < inputs[k].data.size(); ++i) {
      const double x0 = inputs[k].data[i];
      probe[k].data[i] = x0 + h;
      const double fp = evaluate(probe);
      probe[k].data[i] = x0 - h;
      const double fm = evaluate(probe);
      probe[k].data[i] = x0;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      const double diff = std::abs(a - numeric);
      const double mag = std::max(std::abs(a), std::abs(numeric));
      const double err = mag < 1e-6 ? diff : diff / mag;
      errs[i] = err;
      report.max_abs_error = std::max(report.max_abs_error, diff);
      report.max_rel_error = std::max(report.max_rel_error, err);
      if (!(err < tol)) {
        report.passed = false;
      }
    }
    report.errors.push_back(std::move(errs));
  }
  return report;
}

// ---- Explicit instantiations ---------------------------------------------

#define MOLMIX_INSTANTIATE(T)                                                  \
  template class Var<T>;                                                       \
  template class Tape<T>;                                                      \
  template Var<T> matmul(const Var<T> &, const Var<T> &);                      \
  template Var<T> add(const Var<T> &, const Var<T> &);                         \
  template Var<T> sub(const Var<T> &, const Var<T> &);                         \
  template Var<T> mul(const Var<T> &, const Var<T> &);                         \
  template Var<T> scale(const Var<T> &, T);                                    \
  template Var<T> relu(const Var<T> &);                                        \
  template Var<T> sigmoid(const Var<T> &);                                     \
  template Var<T> log(const Var<T> &);                                         \
  template Var<T> exp(const Var<T> &);                                         \
  template Var<T> square(const Var<T> &);                                      \
  template Var<T> abs(const Var<T> &);                                         \
  template Var<T> concat(std::span<const Var<T>>);                             \
  template Var<T> row_softmax(const Var<T> &);                                 \
  template Var<T> gather_rows(const Var<T> &, std::span<const int>);           \
  template Var<T> segment_sum(const Var<T> &, std::span<const int>,            \
                              std::size_t);                                    \
  template Var<T> segment_mean(const Var<T> &, std::span<const int>,           \
                               std::size_t);                                   \
  template Var<T> row_scale(const Var<T> &, const Var<T> &);                   \
  template Var<T> reshape(const Var<T> &, Shape);                              \
  template Var<T> reduce_sum(const Var<T> &, int);                             \
  template Var<T> reduce_mean(const Var<T> &, int);                            \
  template Var<T> unary_map(const Var<T> &, const std::function<T(T)> &,       \
                            const std::function<T(T)> &);

MOLMIX_INSTANTIATE(float)
MOLMIX_INSTANTIATE(double)

#undef MOLMIX_INSTANTIATE

}  // namespace molmix::ad
