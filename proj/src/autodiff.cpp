//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "priorgen/autodiff.h"

#include <cmath>
#include <stdexcept>

namespace priorgen {
namespace {
void require_same_shape(Var a, Var b, const char *op) {
  if (a.tape() != b.tape())
    throw std::invalid_argument(std::string(op) + ": operands on different tapes");
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

Matrix segment_center_value(const Matrix &x, std::span<const int> offsets) {
  Matrix out = x;
  if (testing_hooks::cog_fault()) return out;
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const int begin = offsets[s], count = offsets[s + 1] - offsets[s];
    if (count <= 0) continue;
    auto block = out.middleRows(begin, count);
    const Eigen::RowVectorXd mean = block.colwise().mean();
    block.rowwise() -= mean;
  }
  return out;
}
}  // namespace

const Matrix &Var::value() const { return tape_->value(id_); }

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::push(Matrix value, std::vector<int> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (int p: parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::accumulate(int id, const Matrix &g) {
  Node &n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw std::invalid_argument("backward: foreign variable");
  if (root.rows() != 1 || root.cols() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  for (Node &n: nodes_) n.grad.resize(0, 0);
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (int id = root.id(); id >= 0; --id) {
    Node &n = nodes_[id];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Matrix Tape::grad(Var v) const {
  const Node &n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

ParamBinding::ParamBinding(Tape &tape, const ParamSet &params)
    : tape_(&tape), params_(&params) {
  for (const auto &[name, value]: params) vars_.emplace(name, tape.variable(value));
}

Var ParamBinding::operator[](const std::string &name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw std::out_of_range("missing parameter '" + name + "'");
  return it->second;
}

ParamSet ParamBinding::gradients() const {
  ParamSet out;
  for (const auto &[name, var]: vars_) out.emplace(name, tape_->grad(var));
  return out;
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() + b.value(), {ia, ib},
                        [ia, ib](Tape &t, const Matrix &g) {
                          t.accumulate(ia, g);
                          t.accumulate(ib, g);
                        });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value() - b.value(), {ia, ib},
                        [ia, ib](Tape &t, const Matrix &g) {
                          t.accumulate(ia, g);
                          t.accumulate(ib, -g);
                        });
}

Var scale(Var a, double s) {
  const int ia = a.id();
  return a.tape()->push(a.value() * s, {ia}, [ia, s](Tape &t, const Matrix &g) {
    t.accumulate(ia, g * s);
  });
}

Var add_const(Var a, double c) {
  const int ia = a.id();
  return a.tape()->push((a.value().array() + c).matrix(), {ia},
                        [ia](Tape &t, const Matrix &g) { t.accumulate(ia, g); });
}

Var neg(Var a) { return scale(a, -1.0); }

Var cmul(Var a, Var b) {
  require_same_shape(a, b, "cmul");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value().cwiseProduct(b.value()), {ia, ib},
                        [ia, ib](Tape &t, const Matrix &g) {
                          if (t.requires_grad(ia))
                            t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                          if (t.requires_grad(ib))
                            t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                        });
}

Var cdiv(Var a, Var b) {
  require_same_shape(a, b, "cdiv");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(
      a.value().cwiseQuotient(b.value()), {ia, ib},
      [ia, ib](Tape &t, const Matrix &g) {
        const Matrix &bv = t.value(ib);
        if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseQuotient(bv));
        if (t.requires_grad(ib))
          t.accumulate(ib, -(g.array() * t.value(ia).array() /
                             (bv.array() * bv.array()))
                                 .matrix());
      });
}

Var mul_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows())
    throw std::invalid_argument("mul_col: column shape mismatch");
  const int ia = a.id(), ic = col.id();
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return a.tape()->push(std::move(out), {ia, ic},
                        [ia, ic](Tape &t, const Matrix &g) {
                          const Matrix &c = t.value(ic);
                          if (t.requires_grad(ia))
                            t.accumulate(ia, g.array().colwise() * c.col(0).array());
                          if (t.requires_grad(ic))
                            t.accumulate(ic, g.cwiseProduct(t.value(ia)).rowwise().sum());
                        });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw std::invalid_argument("add_row: row shape mismatch");
  const int ia = a.id(), ir = row.id();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape()->push(std::move(out), {ia, ir},
                        [ia, ir](Tape &t, const Matrix &g) {
                          t.accumulate(ia, g);
                          if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
                        });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return a.tape()->push(std::move(out), {ia, ib},
                        [ia, ib](Tape &t, const Matrix &g) {
                          if (t.requires_grad(ia))
                            t.accumulate(ia, g * t.value(ib).transpose());
                          if (t.requires_grad(ib))
                            t.accumulate(ib, t.value(ia).transpose() * g);
                        });
}

Var linear(Var x, Var w, Var b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols())
    throw std::invalid_argument("linear: shape mismatch");
  const int ix = x.id(), iw = w.id(), ib = b.id();
  Matrix out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return x.tape()->push(std::move(out), {ix, iw, ib},
                        [ix, iw, ib](Tape &t, const Matrix &g) {
                          if (t.requires_grad(ix))
                            t.accumulate(ix, g * t.value(iw).transpose());
                          if (t.requires_grad(iw))
                            t.accumulate(iw, t.value(ix).transpose() * g);
                          if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                        });
}

Var silu(Var a) {
  const int ia = a.id();
  const Eigen::ArrayXXd x = a.value().array();
  Matrix out = (x / (1.0 + (-x).exp())).matrix();
  return a.tape()->push(std::move(out), {ia}, [ia](Tape &t, const Matrix &g) {
    const Eigen::ArrayXXd x = t.value(ia).array();
    const Eigen::ArrayXXd s = 1.0 / (1.0 + (-x).exp());
    t.accumulate(ia, (g.array() * s * (1.0 + x * (1.0 - s))).matrix());
  });
}

Var sigmoid(Var a) {
  const int ia = a.id();
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return a.tape()->push(out, {ia}, [ia, out](Tape &t, const Matrix &g) {
    t.accumulate(ia, (g.array() * out.array() * (1.0 - out.array())).matrix());
  });
}

Var sqrt(Var a) {
  const int ia = a.id();
  Matrix out = a.value().cwiseSqrt();
  return a.tape()->push(out, {ia}, [ia, out](Tape &t, const Matrix &g) {
    t.accumulate(ia, (g.array() * 0.5 / out.array()).matrix());
  });
}

Var square(Var a) {
  const int ia = a.id();
  return a.tape()->push(a.value().cwiseAbs2(), {ia}, [ia](Tape &t, const Matrix &g) {
    t.accumulate(ia, 2.0 * g.cwiseProduct(t.value(ia)));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  Tape *tape = parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const Var &p: parts) {
    if (p.tape() != tape || p.rows() != rows)
      throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var &p: parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<int> parents = ids;
  return tape->push(std::move(out), std::move(parents),
                    [ids, widths](Tape &t, const Matrix &g) {
                      Eigen::Index c = 0;
                      for (std::size_t k = 0; k < ids.size(); ++k) {
                        if (t.requires_grad(ids[k]))
                          t.accumulate(ids[k], g.middleCols(c, widths[k]));
                        c += widths[k];
                      }
                    });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no operands");
  Tape *tape = parts.front().tape();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> heights;
  for (const Var &p: parts) {
    if (p.tape() != tape || p.cols() != cols)
      throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
    ids.push_back(p.id());
    heights.push_back(p.rows());
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var &p: parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<int> parents = ids;
  return tape->push(std::move(out), std::move(parents),
                    [ids, heights](Tape &t, const Matrix &g) {
                      Eigen::Index r = 0;
                      for (std::size_t k = 0; k < ids.size(); ++k) {
                        if (t.requires_grad(ids[k]))
                          t.accumulate(ids[k], g.middleRows(r, heights[k]));
                        r += heights[k];
                      }
                    });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw std::invalid_argument("slice_cols: range out of bounds");
  const int ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return a.tape()->push(a.value().middleCols(start, count), {ia},
                        [ia, rows, cols, start, count](Tape &t, const Matrix &g) {
                          Matrix full = Matrix::Zero(rows, cols);
                          full.middleCols(start, count) = g;
                          t.accumulate(ia, full);
                        });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw std::invalid_argument("slice_rows: range out of bounds");
  const int ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  return a.tape()->push(a.value().middleRows(start, count), {ia},
                        [ia, rows, cols, start, count](Tape &t, const Matrix &g) {
                          Matrix full = Matrix::Zero(rows, cols);
                          full.middleRows(start, count) = g;
                          t.accumulate(ia, full);
                        });
}

Var gather_rows(Var a, std::span<const int> index) {
  const Matrix &v = a.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), v.cols());
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] < 0 || index[e] >= v.rows())
      throw std::out_of_range("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(e)) = v.row(index[e]);
  }
  const int ia = a.id();
  const Eigen::Index rows = v.rows();
  std::vector<int> idx(index.begin(), index.end());
  return a.tape()->push(std::move(out), {ia},
                        [ia, rows, idx = std::move(idx)](Tape &t, const Matrix &g) {
                          Matrix full = Matrix::Zero(rows, g.cols());
                          for (std::size_t e = 0; e < idx.size(); ++e)
                            full.row(idx[e]) += g.row(static_cast<Eigen::Index>(e));
                          t.accumulate(ia, full);
                        });
}

Var scatter_add_rows(Var a, std::span<const int> index, Eigen::Index rows) {
  const Matrix &v = a.value();
  if (static_cast<Eigen::Index>(index.size()) != v.rows())
    throw std::invalid_argument("scatter_add_rows: index length mismatch");
  Matrix out = Matrix::Zero(rows, v.cols());
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] < 0 || index[e] >= rows)
      throw std::out_of_range("scatter_add_rows: index out of range");
    out.row(index[e]) += v.row(static_cast<Eigen::Index>(e));
  }
  const int ia = a.id();
  std::vector<int> idx(index.begin(), index.end());
  return a.tape()->push(std::move(out), {ia},
                        [ia, idx = std::move(idx)](Tape &t, const Matrix &g) {
                          Matrix part(static_cast<Eigen::Index>(idx.size()), g.cols());
                          for (std::size_t e = 0; e < idx.size(); ++e)
                            part.row(static_cast<Eigen::Index>(e)) = g.row(idx[e]);
                          t.accumulate(ia, part);
                        });
}

Var row_sq_norm(Var a) {
  const int ia = a.id();
  return a.tape()->push(a.value().rowwise().squaredNorm(), {ia},
                        [ia](Tape &t, const Matrix &g) {
                          t.accumulate(ia, 2.0 * (t.value(ia).array().colwise() *
                                                  g.col(0).array())
                                                     .matrix());
                        });
}

Var row_dot(Var a, Var b) {
  require_same_shape(a, b, "row_dot");
  const int ia = a.id(), ib = b.id();
  return a.tape()->push(a.value().cwiseProduct(b.value()).rowwise().sum(), {ia, ib},
                        [ia, ib](Tape &t, const Matrix &g) {
                          if (t.requires_grad(ia))
                            t.accumulate(ia, (t.value(ib).array().colwise() *
                                              g.col(0).array())
                                                 .matrix());
                          if (t.requires_grad(ib))
                            t.accumulate(ib, (t.value(ia).array().colwise() *
                                              g.col(0).array())
                                                 .matrix());
                        });
}

Var sum(Var a) {
  const int ia = a.id();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->push(std::move(out), {ia}, [ia, rows, cols](Tape &t, const Matrix &g) {
    t.accumulate(ia, Matrix::Constant(rows, cols, g(0, 0)));
  });
}

Var segment_center(Var a, std::span<const int> offsets) {
  if (offsets.empty() || offsets.back() != a.rows())
    throw std::invalid_argument("segment_center: offsets do not cover the rows");
  const int ia = a.id();
  std::vector<int> off(offsets.begin(), offsets.end());
  Matrix out = segment_center_value(a.value(), off);
  // The projection is symmetric, so the backward pass reuses it.
  return a.tape()->push(std::move(out), {ia},
                        [ia, off = std::move(off)](Tape &t, const Matrix &g) {
                          t.accumulate(ia, segment_center_value(g, off));
                        });
}

Var log_softmax_rows(Var a) {
  const Matrix &v = a.value();
  const Eigen::VectorXd mx = v.rowwise().maxCoeff();
  Matrix shifted = v.colwise() - mx;
  const Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix();
  Matrix out = shifted.colwise() - lse;
  const int ia = a.id();
  Matrix softmax = out.array().exp().matrix();
  return a.tape()->push(std::move(out), {ia},
                        [ia, softmax = std::move(softmax)](Tape &t, const Matrix &g) {
                          const Eigen::VectorXd gs = g.rowwise().sum();
                          t.accumulate(ia, g - (softmax.array().colwise() *
                                                gs.array())
                                                   .matrix());
                        });
}

}  // namespace priorgen
