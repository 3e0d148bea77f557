// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "molmix/error.hpp"

namespace molmix::ad {

// Every tensor is a row-major [rows x cols] matrix; scalars are 1 x 1.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape &) const = default;
};

std::string to_string(const Shape &s);

template <class T>
class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid while the
/// tape is alive.
template <class T>
class Var {
 public:
  Var() = default;

  const Shape &shape() const;
  std::span<const T> value() const;
  // Empty until backward has run.
  std::span<const T> grad() const;
  T item() const;
  bool requires_grad() const;

  Tape<T> *tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T> *tape, std::size_t id): tape_(tape), id_(id) { }

  Tape<T> *tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode record of primitive applications.
///
/// Nodes are appended in execution order, which is a topological order, and
/// backward visits each one exactly once in reverse. A tape can be
/// differentiated once; build a new tape for the next step.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape &, std::size_t self)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Var<T> leaf(Shape shape, std::vector<T> data, bool requires_grad = true);
  Var<T> constant(Shape shape, std::vector<T> data);
  Var<T> scalar(T value) { return constant({ 1, 1 }, { value }); }

  // Records a node computed by an op. Used by the primitives below.
  Var<T> record(Shape shape, std::vector<T> value,
                std::span<const Var<T>> inputs, BackwardFn fn);
  Var<T> record(Shape shape, std::vector<T> value,
                std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    return record(shape, std::move(value),
                  std::span<const Var<T>>(inputs.begin(), inputs.size()),
                  std::move(fn));
  }

  void backward(const Var<T> &loss);
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  // Node access for ops and for reading results.
  const Shape &shape(std::size_t id) const { return nodes_[id].shape; }
  std::span<const T> value(std::size_t id) const { return nodes_[id].value; }
  std::span<const T> grad(std::size_t id) const { return nodes_[id].grad; }
  // Gradient accumulator of an input, or empty span if it needs none.
  std::span<T> grad_sink(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// ---- Primitives ----------------------------------------------------------
//
// Broadcasting: the second operand of add/sub/mul may be a [1 x cols] row
// (expanded over rows) or a 1 x 1 scalar. Nothing else broadcasts.

template <class T> Var<T> matmul(const Var<T> &a, const Var<T> &b);
template <class T> Var<T> add(const Var<T> &a, const Var<T> &b);
template <class T> Var<T> sub(const Var<T> &a, const Var<T> &b);
template <class T> Var<T> mul(const Var<T> &a, const Var<T> &b);
template <class T> Var<T> scale(const Var<T> &a, T factor);
template <class T> Var<T> relu(const Var<T> &a);
template <class T> Var<T> sigmoid(const Var<T> &a);
template <class T> Var<T> log(const Var<T> &a);
template <class T> Var<T> exp(const Var<T> &a);
template <class T> Var<T> square(const Var<T> &a);
template <class T> Var<T> abs(const Var<T> &a);
// Column-wise concatenation of equal-row inputs.
template <class T> Var<T> concat(std::span<const Var<T>> parts);
template <class T> Var<T> row_softmax(const Var<T> &a);
template <class T>
Var<T> gather_rows(const Var<T> &a, std::span<const int> indices);
template <class T>
Var<T> segment_sum(const Var<T> &a, std::span<const int> segment_ids,
                   std::size_t num_segments);
template <class T>
Var<T> segment_mean(const Var<T> &a, std::span<const int> segment_ids,
                    std::size_t num_segments);
// Multiplies row i of a by w(i, 0); w is [rows x 1].
template <class T> Var<T> row_scale(const Var<T> &a, const Var<T> &w);
template <class T> Var<T> reshape(const Var<T> &a, Shape shape);
// axis < 0: all elements -> 1 x 1; axis 0 -> [1 x cols]; axis 1 -> [rows x 1].
template <class T> Var<T> reduce_sum(const Var<T> &a, int axis = -1);
template <class T> Var<T> reduce_mean(const Var<T> &a, int axis = -1);

/// Elementwise op with a caller-supplied value and derivative. Loss code uses
/// this for clamped logs; primitives never clamp.
template <class T>
Var<T> unary_map(const Var<T> &a, const std::function<T(T)> &f,
                 const std::function<T(T)> &df);

template <class T>
Var<T> operator+(const Var<T> &a, const Var<T> &b) { return add(a, b); }
template <class T>
Var<T> operator-(const Var<T> &a, const Var<T> &b) { return sub(a, b); }
template <class T>
Var<T> operator*(const Var<T> &a, const Var<T> &b) { return mul(a, b); }

// ---- Gradient checking ---------------------------------------------------

struct TensorValue {
  Shape shape;
  std::vector<double> data;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  // Per input, per element: relative error (absolute below 1e-6 magnitude).
  std::vector<std::vector<double>> errors;
  bool passed = false;
};

using ScalarFn =
    std::function<Var<double>(Tape<double> &, std::span<const Var<double>>)>;

/// Compares backward() against central differences of step h. An element
/// passes when |analytic - numeric| / max(|analytic|, |numeric|) < tol, or
/// when both magnitudes are below 1e-6 and the absolute difference is < tol.
GradcheckReport gradcheck(const ScalarFn &fn,
                          const std::vector<TensorValue> &inputs,
                          double h = 1e-5, double tol = 1e-4);

}  // namespace molmix::ad
