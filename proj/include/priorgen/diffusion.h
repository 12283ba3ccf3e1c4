//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef PRIORGEN_DIFFUSION_H_
#define PRIORGEN_DIFFUSION_H_

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "priorgen/autodiff.h"
#include "priorgen/core.h"
#include "priorgen/egnn.h"

namespace priorgen {

enum class ScheduleKind { polynomial, cosine };

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view text);

/// Cumulative signal levels alpha_bar_0..alpha_bar_T.
struct NoiseSchedule {
  int T = 0;
  ScheduleKind kind = ScheduleKind::polynomial;
  std::vector<double> alpha_bar;

  double alpha(int t) const;   // sqrt(alpha_bar_t)
  double sigma(int t) const;   // sqrt(1 - alpha_bar_t)
  double beta(int t) const;    // 1 - alpha_bar_t / alpha_bar_{t-1}, t >= 1
  double rho(int t) const;     // posterior standard deviation, t >= 1
};

/// (1 - (t/T)^2)^2 before clipping.
double polynomial_alpha_bar_raw(int t, int T);

NoiseSchedule make_schedule(int T, ScheduleKind kind = ScheduleKind::polynomial);

/// A diffusion state: coordinate block (zero-CoG) and scaled feature block.
struct DiffusionState {
  Matrix x;
  Matrix h;
};

DiffusionState q_sample(const DiffusionState &z0, int t, const NoiseSchedule &schedule,
                        const DiffusionState &eps);

/// Standard-normal draw with the coordinate block CoG-projected.
DiffusionState sample_noise(Rng &rng, int atoms, int feature_dim);

struct DenoiserInput {
  Matrix z_x;             // N x 3
  Matrix z_h;             // N x d
  Matrix t_embed;         // N x 1, t / T
  Matrix prior_x_padded;  // N x 3
  Matrix prior_h_padded;  // N x k
  int prior_count = 0;    // N'

  int atom_count() const { return static_cast<int>(z_x.rows()); }
  /// Width d + 3 + k + 1 of the concatenated node features.
  int condition_width() const;
};

DenoiserInput build_condition(const Matrix &z_x, const Matrix &z_h, int t, int T,
                              const LatentPrior &prior, int atom_count);

inline constexpr const char *kDenoiserPrefix = "dsdm";

/// Denoiser EGNN config: pairwise prior attributes ride on the edges.
EgnnConfig denoiser_egnn_config(EgnnConfig base);

void init_denoiser_params(ParamSet &params, const EgnnConfig &cfg,
                          const FeatureLayout &layout, int latent_dim, Rng &rng);

struct NoisePrediction {
  Matrix eps_x;
  Matrix eps_h;
};

/// Any noise predictor: the trained network, a stub, or an analytic oracle.
using Denoiser = std::function<NoisePrediction(const DenoiserInput &)>;

NoisePrediction denoise_predict(const DenoiserInput &input, const EgnnConfig &cfg,
                                const ParamSet &params);

Denoiser network_denoiser(const EgnnConfig &cfg, const ParamSet &params);

// Tape-level denoiser over a batch of molecules.

struct DenoiserBatch {
  Var z_x, z_h;                     // stacked states
  Matrix t_embed;                   // N_total x 1
  Var prior_x_padded, prior_h_padded;
  Matrix mask;                      // N_total x 1, 1 on prior rows
  std::vector<int> offsets;         // molecule segments
};

struct PredictionVars {
  Var eps_x, eps_h;
};

PredictionVars denoiser_forward(const ParamBinding &params, const EgnnConfig &cfg,
                                const DenoiserBatch &batch);

/// Per-pair draws of one diffusion-loss evaluation.
struct DsdmNoise {
  int t = 1;
  DiffusionState eps;

  static DsdmNoise sample(Rng &rng, int atoms, int feature_dim, int T);
  DsdmNoise rotated(const Eigen::Matrix3d &rotation) const;
};

/// Sum over the batch of ||eps - eps_hat||^2.  `prior_x`/`prior_h` stack
/// the prior rows; each pair's prior aligns with its first N' rows.
Var dsdm_forward(const ParamBinding &params, const EgnnConfig &cfg,
                 std::span<const DiffusionState *const> z0,
                 std::optional<Var> prior_x, std::optional<Var> prior_h,
                 const std::vector<int> &prior_offsets, int latent_dim,
                 const NoiseSchedule &schedule, std::span<const DsdmNoise> noise);

double dsdm_loss(const DiffusionState &z0, const LatentPrior &prior,
                 const NoiseSchedule &schedule, const Denoiser &denoiser,
                 const DsdmNoise &noise);

double dsdm_loss(const DiffusionState &z0, const LatentPrior &prior,
                 const NoiseSchedule &schedule, const Denoiser &denoiser,
                 std::uint64_t seed);

/// z_{t-1} = (z_t - beta/sqrt(1-abar_t) eps_hat)/sqrt(1-beta) + rho noise.
Matrix reverse_update(const Matrix &z, const Matrix &eps_hat, const Matrix &noise,
                      double alpha_bar_t, double alpha_bar_prev);

DiffusionState denoise_step(const DiffusionState &z, int t, const LatentPrior &prior,
                            const NoiseSchedule &schedule, const Denoiser &denoiser,
                            const DiffusionState &noise);

/// Probability mass of N(mu, sd^2) on [level - 0.5, level + 0.5].
double integrated_normal_mass(double mu, double sd, double level);

struct DecodeSpec {
  FeatureScaler scaler;
  FeatureLayout layout;
  std::vector<std::string> alphabet = default_alphabet();
};

/// Maps the t = 1 state to a molecule using the predicted noise.
MolecularPointCloud final_decode(const DiffusionState &z1, const NoiseSchedule &schedule,
                                 const NoisePrediction &eps, const DecodeSpec &spec);

/// All random draws of one sampling run, so runs can be replayed rotated.
struct SamplerNoise {
  DiffusionState initial;
  std::vector<DiffusionState> steps;  // steps[t] used when stepping from t, t = 2..T

  static SamplerNoise draw(Rng &rng, int atoms, int feature_dim, int T);
  SamplerNoise rotated(const Eigen::Matrix3d &rotation) const;
};

using TrajectoryObserver = std::function<void(int t, const DiffusionState &)>;

MolecularPointCloud sample(const LatentPrior &prior, int atom_count,
                           const NoiseSchedule &schedule, const Denoiser &denoiser,
                           const DecodeSpec &spec, const SamplerNoise &noise,
                           const TrajectoryObserver &observer = {});

MolecularPointCloud sample(const LatentPrior &prior, int atom_count,
                           const NoiseSchedule &schedule, const Denoiser &denoiser,
                           const DecodeSpec &spec, std::uint64_t seed,
                           const TrajectoryObserver &observer = {});

}  // namespace priorgen

#endif  // PRIORGEN_DIFFUSION_H_
