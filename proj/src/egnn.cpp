//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "priorgen/egnn.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace priorgen {
namespace {
constexpr double kDistanceEps = 1e-10;

std::string layer_name(const std::string &prefix, int layer) {
  return prefix + ".L" + std::to_string(layer);
}

void add_linear(ParamSet &params, const std::string &name, int fan_in,
                int fan_out, Rng &rng, bool zero = false) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> uni(-bound, bound);
  Matrix w(fan_in, fan_out), b(1, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = zero ? 0.0 : uni(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = zero ? 0.0 : uni(rng);
  params[name + ".W"] = std::move(w);
  params[name + ".b"] = std::move(b);
}

void expect_shape(const ParamSet &params, const std::string &name,
                  Eigen::Index rows, Eigen::Index cols) {
  auto it = params.find(name);
  if (it == params.end())
    throw std::invalid_argument("missing parameter '" + name + "'");
  if (it->second.rows() != rows || it->second.cols() != cols)
    throw std::invalid_argument("parameter '" + name + "' has shape " +
                                std::to_string(it->second.rows()) + "x" +
                                std::to_string(it->second.cols()) + ", expected " +
                                std::to_string(rows) + "x" + std::to_string(cols));
  if (!it->second.allFinite())
    throw std::invalid_argument("parameter '" + name + "' is not finite");
}

void expect_linear(const ParamSet &params, const std::string &name, int fan_in,
                   int fan_out) {
  expect_shape(params, name + ".W", fan_in, fan_out);
  expect_shape(params, name + ".b", 1, fan_out);
}

Var apply_linear(const ParamBinding &p, const std::string &name, Var x) {
  return linear(x, p[name + ".W"], p[name + ".b"]);
}

void check_finite(Var v, const std::string &what, int layer) {
  if (!v.value().allFinite())
    throw NonFiniteError("non-finite " + what + " in EGNN layer " +
                             std::to_string(layer));
}
}  // namespace

void EgnnConfig::validate() const {
  if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
  if (hidden_dim < 1) throw std::invalid_argument("hidden_dim must be >= 1");
  if (message_mlp_depth < 1)
    throw std::invalid_argument("message_mlp_depth must be >= 1");
  if (edge_attr_dim < 1) throw std::invalid_argument("edge_attr_dim must be >= 1");
}

GraphBatch GraphBatch::fully_connected(const std::vector<int> &sizes) {
  GraphBatch g;
  g.offsets.reserve(sizes.size() + 1);
  g.offsets.push_back(0);
  std::size_t edges = 0;
  for (int n: sizes) {
    if (n < 0) throw std::invalid_argument("negative segment size");
    g.offsets.push_back(g.offsets.back() + n);
    edges += static_cast<std::size_t>(n) * std::max(n - 1, 0);
  }
  g.src.reserve(edges);
  g.dst.reserve(edges);
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    const int begin = g.offsets[s], end = g.offsets[s + 1];
    for (int i = begin; i < end; ++i)
      for (int j = begin; j < end; ++j)
        if (i != j) {
          g.src.push_back(i);
          g.dst.push_back(j);
        }
  }
  return g;
}

void init_egnn_params(ParamSet &params, const std::string &prefix,
                      const EgnnConfig &config, int in_dim, int out_dim,
                      Rng &rng) {
  config.validate();
  const int h = config.hidden_dim;
  add_linear(params, prefix + ".in", in_dim, h, rng);
  for (int l = 0; l < config.num_layers; ++l) {
    const std::string ln = layer_name(prefix, l);
    add_linear(params, ln + ".edge0", 2 * h + 1 + config.edge_attr_dim, h, rng);
    for (int k = 1; k < config.message_mlp_depth; ++k)
      add_linear(params, ln + ".edge" + std::to_string(k), h, h, rng);
    if (config.use_attention) add_linear(params, ln + ".att", h, 1, rng);
    add_linear(params, ln + ".coord0", h, h, rng);
    add_linear(params, ln + ".coord1", h, 1, rng, config.zero_init_coord_head);
    add_linear(params, ln + ".node0", 2 * h, h, rng);
    add_linear(params, ln + ".node1", h, h, rng);
  }
  add_linear(params, prefix + ".out", h, out_dim, rng);
}

void check_egnn_params(const ParamSet &params, const std::string &prefix,
                       const EgnnConfig &config, int in_dim, int out_dim) {
  config.validate();
  const int h = config.hidden_dim;
  expect_linear(params, prefix + ".in", in_dim, h);
  for (int l = 0; l < config.num_layers; ++l) {
    const std::string ln = layer_name(prefix, l);
    expect_linear(params, ln + ".edge0", 2 * h + 1 + config.edge_attr_dim, h);
    for (int k = 1; k < config.message_mlp_depth; ++k)
      expect_linear(params, ln + ".edge" + std::to_string(k), h, h);
    if (config.use_attention) expect_linear(params, ln + ".att", h, 1);
    expect_linear(params, ln + ".coord0", h, h);
    expect_linear(params, ln + ".coord1", h, 1);
    expect_linear(params, ln + ".node0", 2 * h, h);
    expect_linear(params, ln + ".node1", h, h);
  }
  expect_linear(params, prefix + ".out", h, out_dim);
}

EgnnOutput egnn_layer_forward(const ParamBinding &p, const std::string &ln,
                              const EgnnConfig &config, Var coords, Var hidden,
                              const GraphBatch &graph,
                              std::optional<Var> edge_attr) {
  const int h = config.hidden_dim;
  const Eigen::Index n = coords.rows();
  if (graph.node_count() != n || hidden.rows() != n)
    throw std::invalid_argument("graph does not match node count");
  if (hidden.cols() != h) throw std::invalid_argument("hidden width mismatch");
  if (graph.edge_count() == 0) {
    // No neighbours: messages aggregate to zero.
    Tape &tape = *coords.tape();
    Var zero = tape.constant(Matrix::Zero(n, h));
    Var in = concat_cols(std::vector<Var>{hidden, zero});
    Var upd = apply_linear(p, ln + ".node1", silu(apply_linear(p, ln + ".node0", in)));
    return {coords, add(hidden, upd)};
  }

  Var diff = sub(gather_rows(coords, graph.src), gather_rows(coords, graph.dst));
  Var d2 = row_sq_norm(diff);
  Var attr = edge_attr ? *edge_attr : d2;
  if (attr.rows() != graph.edge_count() || attr.cols() != config.edge_attr_dim)
    throw std::invalid_argument("edge attribute shape mismatch");

  // First message layer, split so the node terms are computed once per node.
  Var w0 = p[ln + ".edge0.W"];
  Var pi = matmul(hidden, slice_rows(w0, 0, h));
  Var pj = matmul(hidden, slice_rows(w0, h, h));
  Var scalars = concat_cols(std::vector<Var>{d2, attr});
  Var pe = linear(scalars, slice_rows(w0, 2 * h, 1 + config.edge_attr_dim),
                  p[ln + ".edge0.b"]);
  Var m = silu(add(add(gather_rows(pi, graph.src), gather_rows(pj, graph.dst)), pe));
  for (int k = 1; k < config.message_mlp_depth; ++k)
    m = silu(apply_linear(p, ln + ".edge" + std::to_string(k), m));

  Var phi_x = apply_linear(p, ln + ".coord1", silu(apply_linear(p, ln + ".coord0", m)));
  Var dist = sqrt(add_const(d2, kDistanceEps));
  Var weight = cdiv(phi_x, add_const(dist, 1.0));
  Var shift = scatter_add_rows(mul_col(diff, weight), graph.src, n);
  Var coords_out = add(coords, shift);

  Var msg = m;
  if (config.use_attention) msg = mul_col(m, sigmoid(apply_linear(p, ln + ".att", m)));
  Var agg = scatter_add_rows(msg, graph.src, n);
  Var in = concat_cols(std::vector<Var>{hidden, agg});
  Var upd = apply_linear(p, ln + ".node1", silu(apply_linear(p, ln + ".node0", in)));
  return {coords_out, add(hidden, upd)};
}

EgnnOutput egnn_forward(const ParamBinding &p, const std::string &prefix,
                        const EgnnConfig &config, Var coords, Var features,
                        const GraphBatch &graph, std::optional<Var> edge_attr) {
  config.validate();
  if (coords.cols() != 3) throw std::invalid_argument("coordinates must be N x 3");
  if (!p.contains(prefix + ".in.W"))
    throw std::invalid_argument("no EGNN parameters under '" + prefix + "'");
  if (p[prefix + ".in.W"].rows() != features.cols())
    throw std::invalid_argument("feature width " + std::to_string(features.cols()) +
                                " does not match input projection");
  Var h = apply_linear(p, prefix + ".in", features);
  Var x = coords;
  for (int l = 0; l < config.num_layers; ++l) {
    if (!p.contains(layer_name(prefix, l) + ".node0.W"))
      throw std::invalid_argument("EGNN state has fewer layers than the config");
    EgnnOutput out = egnn_layer_forward(p, layer_name(prefix, l), config, x, h,
                                        graph, edge_attr);
    check_finite(out.coords, "coordinates", l);
    check_finite(out.features, "features", l);
    x = out.coords;
    h = out.features;
  }
  return {x, apply_linear(p, prefix + ".out", h)};
}

std::pair<Matrix, Matrix> egnn_forward_values(const ParamSet &params,
                                              const std::string &prefix,
                                              const EgnnConfig &config,
                                              const Matrix &coords,
                                              const Matrix &features,
                                              const GraphBatch &graph) {
  Tape tape(false);
  ParamBinding p(tape, params);
  EgnnOutput out = egnn_forward(p, prefix, config, tape.constant(coords),
                                tape.constant(features), graph);
  return {out.coords.value(), out.features.value()};
}

GradCheckResult gradient_check(
    const std::function<Var(Tape &, const ParamBinding &)> &fn,
    const ParamSet &params, Rng &rng, const GradCheckOptions &options) {
  ParamSet analytic;
  {
    Tape tape;
    ParamBinding p(tape, params);
    Var loss = fn(tape, p);
    tape.backward(loss);
    analytic = p.gradients();
  }
  auto evaluate = [&](const ParamSet &ps) {
    Tape tape(false);
    ParamBinding p(tape, ps);
    return fn(tape, p).scalar();
  };

  GradCheckResult result;
  ParamSet probe = params;
  for (const auto &[name, value]: params) {
    const Eigen::Index size = value.size();
    std::vector<Eigen::Index> picks;
    if (size <= options.samples_per_tensor) {
      for (Eigen::Index i = 0; i < size; ++i) picks.push_back(i);
    } else {
      std::uniform_int_distribution<Eigen::Index> pick(0, size - 1);
      for (int s = 0; s < options.samples_per_tensor; ++s) picks.push_back(pick(rng));
    }
    for (Eigen::Index flat: picks) {
      Matrix &m = probe.at(name);
      const double orig = m.data()[flat];
      m.data()[flat] = orig + options.step;
      const double up = evaluate(probe);
      m.data()[flat] = orig - options.step;
      const double down = evaluate(probe);
      m.data()[flat] = orig;
      const double numeric = (up - down) / (2.0 * options.step);
      const double exact = analytic.at(name).data()[flat];
      const double denom =
          std::max({std::abs(numeric), std::abs(exact), options.abs_floor});
      const double rel = std::abs(numeric - exact) / denom;
      ++result.checked;
      if (rel > result.max_rel_error || !std::isfinite(rel)) {
        result.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        const Eigen::Index r = flat % value.rows(), c = flat / value.rows();
        result.worst = name + "[" + std::to_string(r) + "," + std::to_string(c) + "]";
      }
    }
  }
  return result;
}

}  // namespace priorgen
