//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "priorgen/autodiff.h"
#include "priorgen/egnn.h"

namespace priorgen {
namespace {
using Fn = std::function<Var(Tape &, const ParamBinding &)>;

double check(const Fn &fn, const ParamSet &params) {
  Rng rng(1);
  GradCheckOptions opt;
  opt.samples_per_tensor = 64;
  return gradient_check(fn, params, rng, opt).max_rel_error;
}

ParamSet random_params(std::initializer_list<std::pair<std::string, std::pair<int, int>>> shapes,
                       std::uint64_t seed = 2) {
  Rng rng(seed);
  ParamSet p;
  for (const auto &[name, shape]: shapes)
    p[name] = standard_normal(rng, shape.first, shape.second);
  return p;
}

TEST(Autodiff, LinearMapIsExact) {
  auto params = random_params({{"x", {4, 3}}, {"W", {3, 2}}, {"b", {1, 2}}});
  Fn fn = [](Tape &, const ParamBinding &p) {
    return sum(linear(p["x"], p["W"], p["b"]));
  };
  EXPECT_LT(check(fn, params), 1e-9);
}

TEST(Autodiff, ElementwiseOps) {
  auto params = random_params({{"a", {3, 4}}, {"b", {3, 4}}, {"c", {3, 1}}, {"r", {1, 4}}});
  params["b"] = params["b"].array().abs() + 0.5;
  Fn fn = [](Tape &, const ParamBinding &p) {
    Var a = p["a"], b = p["b"];
    Var e = add(cmul(silu(a), sigmoid(b)), cdiv(square(a), b));
    e = sub(e, sqrt(add_const(square(b), 1.0)));
    e = mul_col(add_row(e, p["r"]), p["c"]);
    return sum(scale(neg(e), 0.3));
  };
  EXPECT_LT(check(fn, params), 1e-7);
}

TEST(Autodiff, StructuralOps) {
  auto params = random_params({{"a", {5, 3}}, {"b", {5, 2}}, {"w", {3, 4}}});
  const std::vector<int> idx = {0, 4, 4, 2, 1, 3, 0};
  const std::vector<int> offsets = {0, 2, 5};
  Fn fn = [&](Tape &, const ParamBinding &p) {
    Var c = concat_cols(std::vector<Var>{p["a"], p["b"]});
    c = slice_rows(concat_rows(std::vector<Var>{c, c}), 3, 5);
    Var g = gather_rows(c, idx);
    Var s = scatter_add_rows(g, idx, 5);
    Var centered = segment_center(slice_cols(s, 1, 3), offsets);
    Var ls = log_softmax_rows(matmul(slice_rows(centered, 1, 4), slice_cols(p["w"], 1, 3)));
    return add(sum(cmul(ls, ls)), sum(row_dot(row_sq_norm(centered), slice_cols(s, 0, 1))));
  };
  EXPECT_LT(check(fn, params), 1e-7);
}

TEST(Autodiff, SegmentCenterZeroesSegmentMeans) {
  Tape tape;
  Rng rng(3);
  Var x = tape.variable(standard_normal(rng, 7, 3));
  const std::vector<int> offsets = {0, 3, 3, 7};
  Var y = segment_center(x, offsets);
  EXPECT_LE(y.value().topRows(3).colwise().mean().cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE(y.value().bottomRows(4).colwise().mean().cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
  Tape tape;
  Var a = tape.constant(Matrix::Ones(2, 2));
  Var b = tape.variable(Matrix::Constant(2, 2, 3.0));
  Var l = sum(cmul(a, b));
  tape.backward(l);
  EXPECT_EQ(tape.grad(a), Matrix::Zero(2, 2));
  EXPECT_EQ(tape.grad(b), Matrix::Ones(2, 2));
}

TEST(Autodiff, NonRecordingTapeEvaluates) {
  Tape tape(false);
  Var a = tape.variable(Matrix::Constant(1, 1, 2.0));
  Var l = square(a);
  EXPECT_DOUBLE_EQ(l.scalar(), 4.0);
  tape.backward(l);
  EXPECT_EQ(tape.grad(a)(0, 0), 0.0);
}

TEST(Autodiff, ShapeMismatchThrows) {
  Tape tape;
  Var a = tape.variable(Matrix::Zero(2, 3));
  Var b = tape.variable(Matrix::Zero(3, 2));
  EXPECT_THROW(add(a, b), std::invalid_argument);
  EXPECT_THROW(tape.backward(a), std::invalid_argument);
  EXPECT_THROW(matmul(a, a), std::invalid_argument);
}
}  // namespace
}  // namespace priorgen
