//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef PRIORGEN_EAAE_H_
#define PRIORGEN_EAAE_H_

#include <optional>
#include <span>
#include <vector>

#include "priorgen/autodiff.h"
#include "priorgen/core.h"
#include "priorgen/egnn.h"

namespace priorgen {

/// Equivariant asymmetric autoencoder: the encoder sees a substructure, the
/// decoder rebuilds the whole molecule from the latent prior.
struct EaaeConfig {
  EgnnConfig encoder{.num_layers = 1, .hidden_dim = 256};
  EgnnConfig decoder{.num_layers = 9, .hidden_dim = 256};
  int latent_feat_dim = 1;
  double sigma0 = 0.01;
  bool asymmetric = true;
  /// Spread (Angstrom) of the virtual nodes added by the decoder.
  double virtual_spread = 0.1;

  void validate() const;
  bool operator==(const EaaeConfig &) const = default;
};

inline constexpr const char *kEncoderPrefix = "eaae.enc";
inline constexpr const char *kDecoderPrefix = "eaae.dec";

void init_eaae_params(ParamSet &params, const EaaeConfig &cfg,
                      const FeatureLayout &layout, Rng &rng);

/// A training pair in model coordinates: features scaled, molecule rows
/// reordered with substructure atoms first, both point sets zero-CoG.
struct PreparedPair {
  Matrix x;                 // N x 3
  Matrix h;                 // N x d, scaled
  std::vector<int> types;   // N
  int n_sub = 0;            // N'
  Matrix sub_x;             // N' x 3, centered on its own CoG
  Matrix sub_h;             // N' x d, scaled
  int id = -1;

  int atom_count() const { return static_cast<int>(x.rows()); }
};

PreparedPair prepare_pair(const TrainingPair &pair, const FeatureScaler &scaler);

/// Rotates both point sets of a prepared pair.
PreparedPair rotate_pair(const PreparedPair &pair, const Eigen::Matrix3d &rotation);

/// Every random draw the autoencoder makes for one pair.
struct EaaeNoise {
  Matrix enc_x;   // N' x 3, CoG-projected
  Matrix enc_h;   // N' x k
  Matrix virt_x;  // (N_dec - N') x 3

  static EaaeNoise sample(Rng &rng, int n_sub, int n_decoded, int latent_dim);
  EaaeNoise rotated(const Eigen::Matrix3d &rotation) const;
};

/// Closed-form KL(N(mu, s^2 I) || N(0, I)) over `dims` dimensions given the
/// summed squared mean.
double gaussian_kl(double mu_sq_sum, double dims, double sigma);

struct EncodeResult {
  LatentPrior mean;
  LatentPrior prior;
};

/// Encodes a zero-CoG substructure (scaled features).  Without noise the
/// prior equals the encoder mean.
EncodeResult encode(const Matrix &sub_x, const Matrix &sub_h,
                    const EaaeConfig &cfg, const ParamSet &params,
                    const std::optional<EaaeNoise> &noise = std::nullopt);

struct DecodeResult {
  Matrix coords;   // N x 3
  Matrix logits;   // N x num_types
  Matrix charge;   // N x 1 (scaled units), empty without a charge column
};

/// Decodes a prior to `target_atoms` atoms.  `virt_x` supplies the
/// standard-normal draws for the virtual nodes.
DecodeResult decode(const LatentPrior &prior, int target_atoms,
                    const EaaeConfig &cfg, const FeatureLayout &layout,
                    const ParamSet &params, const Matrix &virt_x);

struct EaaeTerms {
  double coord = 0;
  double type = 0;
  double charge = 0;
  double kl = 0;

  double reconstruction() const { return coord + type + charge; }
  double total() const { return reconstruction() + kl; }
};

EaaeTerms eaae_loss(const PreparedPair &pair, const EaaeConfig &cfg,
                    const FeatureLayout &layout, const ParamSet &params,
                    const EaaeNoise &noise);

EaaeTerms eaae_loss(const PreparedPair &pair, const EaaeConfig &cfg,
                    const FeatureLayout &layout, const ParamSet &params,
                    std::uint64_t seed);

// Batched tape-level evaluation used by training and gradient checks.

struct EaaeBatch {
  Var coord, type, charge, kl;  // sums over the batch, 1 x 1
  /// Stacked prior rows of all pairs with a substructure; segment s spans
  /// rows [prior_offsets[s], prior_offsets[s + 1]).
  Var f_x, f_h;
  std::vector<int> prior_offsets;
  bool has_prior = false;

  Var total() const;
};

EaaeBatch eaae_forward(const ParamBinding &params, const EaaeConfig &cfg,
                       const FeatureLayout &layout,
                       std::span<const PreparedPair *const> pairs,
                       std::span<const EaaeNoise> noise);

/// Number of decoder nodes for a pair under the config.
int decoded_atom_count(const PreparedPair &pair, const EaaeConfig &cfg);

}  // namespace priorgen

#endif  // PRIORGEN_EAAE_H_
