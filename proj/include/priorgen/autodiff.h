//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef PRIORGEN_AUTODIFF_H_
#define PRIORGEN_AUTODIFF_H_

#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "priorgen/core.h"

namespace priorgen {

/// Named dense parameter tensors.  Ordered so that iteration (and therefore
/// checkpoint layout and optimizer updates) is deterministic.
using ParamSet = std::map<std::string, Matrix>;

class Tape;

/// Handle to a node on a Tape.  Cheap to copy; valid while the tape lives.
class Var {
public:
  Var() = default;
  Var(Tape *tape, int id): tape_(tape), id_(id) { }

  const Matrix &value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape *tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

private:
  Tape *tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode recording of matrix expressions.  With gradients disabled
/// the same operators evaluate eagerly and record nothing backwards.
class Tape {
public:
  using Backward = std::function<void(Tape &, const Matrix &)>;

  explicit Tape(bool record = true): record_(record) { }
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  bool recording() const { return record_; }

  Var variable(Matrix value);
  Var constant(Matrix value);

  Var push(Matrix value, std::vector<int> parents, Backward backward);

  const Matrix &value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Seeds d(root)/d(root) = 1 and propagates.  Root must be 1 x 1.
  void backward(Var root);

  /// Gradient of the last backward root with respect to `v`; zero matrix if
  /// `v` does not influence it.
  Matrix grad(Var v) const;

  void accumulate(int id, const Matrix &g);

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
  bool record_;
};

/// Binds a ParamSet to tape leaves and collects gradients by name.
class ParamBinding {
public:
  ParamBinding(Tape &tape, const ParamSet &params);

  Var operator[](const std::string &name) const;
  bool contains(const std::string &name) const { return vars_.count(name) != 0; }

  ParamSet gradients() const;
  Tape &tape() const { return *tape_; }

private:
  Tape *tape_;
  const ParamSet *params_;
  std::map<std::string, Var> vars_;
};

// Operators.  Shapes follow Eigen conventions; mismatches throw
// std::invalid_argument.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var add_const(Var a, double c);
Var cmul(Var a, Var b);
Var cdiv(Var a, Var b);
Var neg(Var a);

/// a (n x m) times a column (n x 1) broadcast across columns.
Var mul_col(Var a, Var col);
/// a (n x m) plus a row (1 x m) broadcast across rows.
Var add_row(Var a, Var row);

Var matmul(Var a, Var b);
/// x W + b, with b a 1 x out row.
Var linear(Var x, Var w, Var b);

Var silu(Var a);
Var sigmoid(Var a);
Var sqrt(Var a);
Var square(Var a);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);

Var gather_rows(Var a, std::span<const int> index);
/// out[index[e]] += a[e]; out has `rows` rows.
Var scatter_add_rows(Var a, std::span<const int> index, Eigen::Index rows);

/// Per-row squared norm, n x 1.
Var row_sq_norm(Var a);
/// Per-row dot product, n x 1.
Var row_dot(Var a, Var b);
/// Sum of all entries, 1 x 1.
Var sum(Var a);

/// Subtracts the column mean within each contiguous row segment.
/// `offsets` has one more entry than segments; empty segments are skipped.
/// Honors the center-of-gravity fault hook.
Var segment_center(Var a, std::span<const int> offsets);

Var log_softmax_rows(Var a);

}  // namespace priorgen

#endif  // PRIORGEN_AUTODIFF_H_
