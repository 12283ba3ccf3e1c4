//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef PRIORGEN_EGNN_H_
#define PRIORGEN_EGNN_H_

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "priorgen/autodiff.h"
#include "priorgen/core.h"

namespace priorgen {

class NonFiniteError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct EgnnConfig {
  int num_layers = 9;
  int hidden_dim = 256;
  bool use_attention = true;
  int message_mlp_depth = 2;
  /// Width of a_ij.  With no explicit attributes a_ij = d_ij^2 (width 1).
  int edge_attr_dim = 1;
  /// Zero the last coordinate-MLP layer at init so layers start as the
  /// identity on coordinates.
  bool zero_init_coord_head = true;

  void validate() const;
  bool operator==(const EgnnConfig &) const = default;
};

/// Several molecules packed into one block-diagonal graph.  Every molecule
/// is fully connected; `offsets` has one entry per molecule plus the total.
struct GraphBatch {
  std::vector<int> offsets;
  std::vector<int> src;
  std::vector<int> dst;

  int node_count() const { return offsets.empty() ? 0 : offsets.back(); }
  int edge_count() const { return static_cast<int>(src.size()); }
  int segment_count() const { return static_cast<int>(offsets.size()) - 1; }

  static GraphBatch fully_connected(const std::vector<int> &sizes);
};

/// Creates the parameters of one EGNN stack under `prefix`.
void init_egnn_params(ParamSet &params, const std::string &prefix,
                      const EgnnConfig &config, int in_dim, int out_dim,
                      Rng &rng);

/// Checks that `params` holds a consistent stack for the given dimensions.
void check_egnn_params(const ParamSet &params, const std::string &prefix,
                       const EgnnConfig &config, int in_dim, int out_dim);

struct EgnnOutput {
  Var coords;
  Var features;
};

/// One layer on hidden features (width hidden_dim).  `edge_attr`, when
/// given, is E x edge_attr_dim and replaces the default a_ij = d_ij^2.
EgnnOutput egnn_layer_forward(const ParamBinding &params,
                              const std::string &layer_prefix,
                              const EgnnConfig &config, Var coords, Var hidden,
                              const GraphBatch &graph,
                              std::optional<Var> edge_attr = std::nullopt);

/// Input projection, num_layers layers, output projection.  Throws
/// NonFiniteError naming the layer on a non-finite intermediate.
EgnnOutput egnn_forward(const ParamBinding &params, const std::string &prefix,
                        const EgnnConfig &config, Var coords, Var features,
                        const GraphBatch &graph,
                        std::optional<Var> edge_attr = std::nullopt);

/// Evaluation helper without gradients.
std::pair<Matrix, Matrix> egnn_forward_values(const ParamSet &params,
                                              const std::string &prefix,
                                              const EgnnConfig &config,
                                              const Matrix &coords,
                                              const Matrix &features,
                                              const GraphBatch &graph);

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  std::string worst;  // "<tensor>[r,c]"
};

struct GradCheckOptions {
  double step = 1e-5;
  int samples_per_tensor = 6;
  /// Floor of the relative-error denominator.
  double abs_floor = 1e-6;
};

/// Compares tape gradients of a scalar function of `params` with central
/// finite differences at sampled coordinates of every tensor.
GradCheckResult gradient_check(
    const std::function<Var(Tape &, const ParamBinding &)> &fn,
    const ParamSet &params, Rng &rng, const GradCheckOptions &options = {});

}  // namespace priorgen

#endif  // PRIORGEN_EGNN_H_
