//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef PRIORGEN_TRAINING_H_
#define PRIORGEN_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "priorgen/autodiff.h"
#include "priorgen/config.h"
#include "priorgen/diffusion.h"
#include "priorgen/eaae.h"

namespace priorgen {

/// Fresh EAAE and denoiser parameters, rounded to float32.
ParamSet init_model_params(const ModelConfig &cfg, std::uint64_t seed);

/// Rounds every entry to the nearest float32 value.
void quantize_f32(ParamSet &params);

NoiseSchedule model_schedule(const ModelConfig &cfg);

struct AdamState {
  ParamSet m, v;
  long step = 0;
};

struct TrainState {
  ParamSet params;
  ParamSet ema;
  AdamState adam;
  long step = 0;
};

TrainState init_train_state(const ModelConfig &cfg, std::uint64_t seed);

/// Noise consumed by one joint loss evaluation.
struct StepNoise {
  std::vector<EaaeNoise> eaae;
  std::vector<DsdmNoise> dsdm;

  static StepNoise sample(Rng &rng, std::span<const PreparedPair *const> batch,
                          const ModelConfig &cfg);
  StepNoise rotated(const Eigen::Matrix3d &rotation) const;
};

struct JointVars {
  EaaeBatch eaae;
  Var l_eaae, l_dsdm, total;
};

/// L = L_EAAE + w * L_DSDM with the DSDM conditioned on the encoder's prior.
JointVars joint_forward(const ParamBinding &params, const ModelConfig &cfg,
                        const NoiseSchedule &schedule,
                        std::span<const PreparedPair *const> batch, const StepNoise &noise,
                        double dsdm_weight = 1.0);

struct LossBreakdown {
  double eaae_coord = 0, eaae_type = 0, eaae_charge = 0, eaae_kl = 0;
  double eaae = 0, dsdm = 0, total = 0;
  double grad_norm = 0;
};

LossBreakdown joint_loss(const ParamSet &params, const ModelConfig &cfg,
                         const NoiseSchedule &schedule,
                         std::span<const PreparedPair *const> batch, const StepNoise &noise,
                         double dsdm_weight = 1.0);

/// Raised when a step produces a non-finite loss; the message lists batch ids.
class NonFiniteLoss : public std::runtime_error {
public:
  NonFiniteLoss(long step, std::vector<int> ids, const std::string &cause = {});
  long step;
  std::vector<int> batch_ids;
};

/// One joint update: forward, backward, global-norm clip, Adam, EMA.
LossBreakdown train_step(TrainState &state, const ModelConfig &model, const TrainConfig &train,
                         const NoiseSchedule &schedule,
                         std::span<const PreparedPair *const> batch, Rng &rng);

/// Indices of the pairs used at `step`: consecutive slices of per-epoch
/// shuffles, so a step's batch depends only on (n, batch size, step, seed).
/// A batch larger than n spans several epochs.
std::vector<int> batch_indices(std::size_t n, int batch_size, long step, std::uint64_t seed);

/// Per-step generator, a function of (seed, step) only.
Rng step_rng(std::uint64_t seed, long step);

long planned_steps(const TrainConfig &train, std::size_t pair_count);

/// Timesteps at which the bound diagnostic evaluates the denoiser with the
/// number of steps each one stands for.  t = 1 always appears with weight 1.
std::vector<std::pair<int, int>> bound_timesteps(const NoiseSchedule &schedule, int strata = 16);

/// w(t) = beta_t^2 / (2 rho_t^2 (1 - beta_t)(1 - alpha_bar_t)) for t >= 2;
/// the t = 1 term gets w(0) = -1.
double bound_weight(const NoiseSchedule &schedule, int t);

struct BoundNoise {
  std::vector<EaaeNoise> eaae;
  /// eps[b][k] pairs with bound_timesteps()[k].
  std::vector<std::vector<DiffusionState>> eps;

  static BoundNoise sample(Rng &rng, std::span<const PreparedPair *const> batch,
                           const ModelConfig &cfg, std::size_t timesteps);
  BoundNoise rotated(const Eigen::Matrix3d &rotation) const;
};

/// Stratified estimate of the reweighted bound, summed over the batch:
///   sum_{t >= 2} w(t) ||eps - eps_hat||^2  -  w(0)/2 ||eps - eps_hat(t = 1)||^2.
/// Reporting only.
double variational_bound_diagnostic(std::span<const PreparedPair *const> batch,
                                    const ParamSet &params, const ModelConfig &cfg,
                                    const NoiseSchedule &schedule, const BoundNoise &noise);

double variational_bound_diagnostic(std::span<const PreparedPair *const> batch,
                                    const ParamSet &params, const ModelConfig &cfg,
                                    const NoiseSchedule &schedule, std::uint64_t seed);

inline constexpr int kCheckpointVersion = 2;

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  RunConfig config;
  TrainState state;
  /// Free-form provenance (seed, data digest, delta histogram, ...).
  std::map<std::string, std::string> meta;
};

/// Writes to a sibling temporary file and renames it over `path`.
void save_checkpoint(const std::filesystem::path &path, const Checkpoint &checkpoint,
                     int version = kCheckpointVersion);
Checkpoint load_checkpoint(const std::filesystem::path &path);

struct LogRecord {
  long step = 0;
  LossBreakdown loss;
  /// NaN when the diagnostic was not evaluated at this step.
  double bound = 0;
  double wall_seconds = 0;
};

std::string format_log_record(const LogRecord &record);

struct TrainHooks {
  std::function<void(const LogRecord &)> on_log;
  std::function<void(const TrainState &)> on_checkpoint;
  std::function<void(long step, const LossBreakdown &)> on_step;
};

/// Runs steps state.step .. `until` - 1 over `pairs`.  Logging and
/// checkpoint cadence follow `cfg.train`.
void train(TrainState &state, const RunConfig &cfg, std::span<const PreparedPair> pairs,
           long until, const TrainHooks &hooks = {});

}  // namespace priorgen

#endif  // PRIORGEN_TRAINING_H_
