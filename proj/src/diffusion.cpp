//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "priorgen/diffusion.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace priorgen {
namespace {
constexpr double kPrecision = 1e-5;

void check_step(int t, const NoiseSchedule &schedule) {
  if (t < 1 || t > schedule.T)
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " +
                            std::to_string(schedule.T) + "]");
}

std::vector<double> clip_and_accumulate(const std::vector<double> &raw, double lo,
                                        double hi) {
  std::vector<double> out(raw.size());
  out[0] = raw[0];
  for (std::size_t t = 1; t < raw.size(); ++t) {
    const double ratio = raw[t - 1] > 0 ? raw[t] / raw[t - 1] : 0.0;
    out[t] = out[t - 1] * std::clamp(ratio, lo, hi);
  }
  return out;
}

/// Pads stacked prior rows to the stacked state layout.
Var pad_prior(Var prior, const std::vector<int> &prior_offsets,
              const std::vector<int> &offsets, Tape &tape) {
  const int prior_rows = static_cast<int>(prior.rows());
  Var src = concat_rows(std::vector<Var>{prior, tape.constant(Matrix::Zero(1, prior.cols()))});
  std::vector<int> index;
  index.reserve(offsets.back());
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const int n_sub = prior_offsets[s + 1] - prior_offsets[s];
    const int n = offsets[s + 1] - offsets[s];
    if (n_sub > n) throw std::invalid_argument("prior larger than molecule");
    for (int r = 0; r < n; ++r) index.push_back(r < n_sub ? prior_offsets[s] + r : prior_rows);
  }
  return gather_rows(src, index);
}
}  // namespace

std::string_view to_string(ScheduleKind kind) {
  return kind == ScheduleKind::cosine ? "cosine" : "polynomial";
}

ScheduleKind parse_schedule_kind(std::string_view text) {
  if (text == "polynomial") return ScheduleKind::polynomial;
  if (text == "cosine") return ScheduleKind::cosine;
  throw std::invalid_argument("unknown schedule kind '" + std::string(text) + "'");
}

double NoiseSchedule::alpha(int t) const { return std::sqrt(alpha_bar.at(t)); }
double NoiseSchedule::sigma(int t) const { return std::sqrt(1.0 - alpha_bar.at(t)); }

double NoiseSchedule::beta(int t) const {
  if (t < 1) throw std::out_of_range("beta is defined for t >= 1");
  return 1.0 - alpha_bar.at(t) / alpha_bar.at(t - 1);
}

double NoiseSchedule::rho(int t) const {
  const double b = beta(t);
  return std::sqrt(b * (1.0 - alpha_bar.at(t - 1)) / (1.0 - alpha_bar.at(t)));
}

double polynomial_alpha_bar_raw(int t, int T) {
  const double r = static_cast<double>(t) / T;
  return (1.0 - r * r) * (1.0 - r * r);
}

NoiseSchedule make_schedule(int T, ScheduleKind kind) {
  if (T < 2) throw std::invalid_argument("schedule needs T >= 2");
  NoiseSchedule s;
  s.T = T;
  s.kind = kind;
  std::vector<double> raw(T + 1);
  if (kind == ScheduleKind::polynomial) {
    for (int t = 0; t <= T; ++t) raw[t] = polynomial_alpha_bar_raw(t, T);
    s.alpha_bar = clip_and_accumulate(raw, 0.001, 1.0);
    for (double &a: s.alpha_bar) a = (1.0 - 2.0 * kPrecision) * a + kPrecision;
  } else {
    constexpr double offset = 0.008;
    auto f = [&](int t) {
      const double c = std::cos((static_cast<double>(t) / T + offset) / (1.0 + offset) *
                                std::numbers::pi / 2.0);
      return c * c;
    };
    for (int t = 0; t <= T; ++t) raw[t] = f(t) / f(0);
    // beta clipped at 0.999, i.e. ratio kept above 0.001.
    s.alpha_bar = clip_and_accumulate(raw, 0.001, 1.0);
  }
  return s;
}

DiffusionState q_sample(const DiffusionState &z0, int t, const NoiseSchedule &schedule,
                        const DiffusionState &eps) {
  check_step(t, schedule);
  if (eps.x.rows() != z0.x.rows() || eps.h.rows() != z0.h.rows() ||
      eps.h.cols() != z0.h.cols())
    throw std::invalid_argument("noise shape does not match state");
  const double a = schedule.alpha(t), s = schedule.sigma(t);
  return {a * z0.x + s * eps.x, a * z0.h + s * eps.h};
}

DiffusionState sample_noise(Rng &rng, int atoms, int feature_dim) {
  DiffusionState e;
  e.x = projected_normal(rng, atoms);
  e.h = standard_normal(rng, atoms, feature_dim);
  return e;
}

int DenoiserInput::condition_width() const {
  return static_cast<int>(z_h.cols() + 3 + prior_h_padded.cols() + 1);
}

DenoiserInput build_condition(const Matrix &z_x, const Matrix &z_h, int t, int T,
                              const LatentPrior &prior, int atom_count) {
  if (prior.size() > atom_count) throw std::invalid_argument("prior larger than molecule");
  if (z_x.rows() != atom_count || z_h.rows() != atom_count || z_x.cols() != 3)
    throw std::invalid_argument("state shape does not match atom count");
  if (prior.f_h.rows() != prior.size())
    throw std::invalid_argument("prior blocks disagree on row count");
  DenoiserInput in;
  in.z_x = z_x;
  in.z_h = z_h;
  in.t_embed = Matrix::Constant(atom_count, 1, static_cast<double>(t) / T);
  in.prior_count = prior.size();
  in.prior_x_padded = Matrix::Zero(atom_count, 3);
  in.prior_h_padded = Matrix::Zero(atom_count, prior.f_h.cols());
  if (prior.size() > 0) {
    in.prior_x_padded.topRows(prior.size()) = center_of_gravity_project(prior.f_x);
    in.prior_h_padded.topRows(prior.size()) = prior.f_h;
  }
  return in;
}

EgnnConfig denoiser_egnn_config(EgnnConfig base) {
  base.edge_attr_dim = 3;
  return base;
}

void init_denoiser_params(ParamSet &params, const EgnnConfig &cfg,
                          const FeatureLayout &layout, int latent_dim, Rng &rng) {
  init_egnn_params(params, kDenoiserPrefix, denoiser_egnn_config(cfg),
                   layout.width() + 4 + latent_dim, layout.width(), rng);
}

PredictionVars denoiser_forward(const ParamBinding &p, const EgnnConfig &base,
                                const DenoiserBatch &b) {
  Tape &tape = p.tape();
  const EgnnConfig cfg = denoiser_egnn_config(base);
  std::vector<int> sizes;
  for (std::size_t s = 0; s + 1 < b.offsets.size(); ++s)
    sizes.push_back(b.offsets[s + 1] - b.offsets[s]);
  GraphBatch g = GraphBatch::fully_connected(sizes);
  Var mask = tape.constant(b.mask);

  // Node invariants of the prior relative to the noisy state.
  Var fx = b.prior_x_padded, zx = b.z_x;
  Var inv = concat_cols(std::vector<Var>{
      row_sq_norm(fx), row_dot(fx, zx), cmul(row_sq_norm(sub(fx, zx)), mask)});
  Var feats = concat_cols(std::vector<Var>{b.z_h, tape.constant(b.t_embed), inv,
                                           b.prior_h_padded});

  Matrix pair_mask(g.edge_count(), 1);
  for (int e = 0; e < g.edge_count(); ++e)
    pair_mask(e, 0) = b.mask(g.src[e], 0) * b.mask(g.dst[e], 0);
  Var pm = tape.constant(pair_mask);
  Var d0 = row_sq_norm(sub(gather_rows(zx, g.src), gather_rows(zx, g.dst)));
  Var df = row_sq_norm(sub(gather_rows(fx, g.src), gather_rows(fx, g.dst)));
  Var attr = concat_cols(std::vector<Var>{d0, cmul(df, pm), pm});

  EgnnOutput out = egnn_forward(p, kDenoiserPrefix, cfg, zx, feats, g, attr);
  return {segment_center(sub(out.coords, zx), g.offsets), out.features};
}

NoisePrediction denoise_predict(const DenoiserInput &input, const EgnnConfig &cfg,
                                const ParamSet &params) {
  Tape tape(false);
  ParamBinding p(tape, params);
  DenoiserBatch b;
  b.z_x = tape.constant(input.z_x);
  b.z_h = tape.constant(input.z_h);
  b.t_embed = input.t_embed;
  b.prior_x_padded = tape.constant(input.prior_x_padded);
  b.prior_h_padded = tape.constant(input.prior_h_padded);
  b.mask = Matrix::Zero(input.atom_count(), 1);
  b.mask.topRows(input.prior_count).setOnes();
  b.offsets = {0, input.atom_count()};
  PredictionVars v = denoiser_forward(p, cfg, b);
  NoisePrediction out{v.eps_x.value(), v.eps_h.value()};
  if (!out.eps_x.allFinite() || !out.eps_h.allFinite())
    throw NonFiniteError("denoiser produced a non-finite prediction");
  return out;
}

Denoiser network_denoiser(const EgnnConfig &cfg, const ParamSet &params) {
  return [cfg, params](const DenoiserInput &in) { return denoise_predict(in, cfg, params); };
}

DsdmNoise DsdmNoise::sample(Rng &rng, int atoms, int feature_dim, int T) {
  DsdmNoise n;
  n.t = std::uniform_int_distribution<int>(1, T)(rng);
  n.eps = sample_noise(rng, atoms, feature_dim);
  return n;
}

DsdmNoise DsdmNoise::rotated(const Eigen::Matrix3d &rotation) const {
  DsdmNoise n = *this;
  n.eps.x = eps.x * rotation.transpose();
  return n;
}

Var dsdm_forward(const ParamBinding &p, const EgnnConfig &cfg,
                 std::span<const DiffusionState *const> z0,
                 std::optional<Var> prior_x, std::optional<Var> prior_h,
                 const std::vector<int> &prior_offsets, int latent_dim,
                 const NoiseSchedule &schedule, std::span<const DsdmNoise> noise) {
  if (z0.size() != noise.size() || prior_offsets.size() != z0.size() + 1)
    throw std::invalid_argument("dsdm batch inputs disagree in length");
  Tape &tape = p.tape();
  std::vector<int> offsets{0};
  for (const DiffusionState *z: z0) offsets.push_back(offsets.back() + static_cast<int>(z->x.rows()));
  const int total = offsets.back();
  const int d = static_cast<int>(z0.front()->h.cols());

  Matrix zx(total, 3), zh(total, d), ex(total, 3), eh(total, d), temb(total, 1);
  Matrix mask = Matrix::Zero(total, 1);
  for (std::size_t b = 0; b < z0.size(); ++b) {
    const int n = offsets[b + 1] - offsets[b];
    DiffusionState zt = q_sample(*z0[b], noise[b].t, schedule, noise[b].eps);
    zx.middleRows(offsets[b], n) = zt.x;
    zh.middleRows(offsets[b], n) = zt.h;
    ex.middleRows(offsets[b], n) = noise[b].eps.x;
    eh.middleRows(offsets[b], n) = noise[b].eps.h;
    temb.middleRows(offsets[b], n).setConstant(static_cast<double>(noise[b].t) / schedule.T);
    mask.middleRows(offsets[b], prior_offsets[b + 1] - prior_offsets[b]).setOnes();
  }

  DenoiserBatch batch;
  batch.z_x = tape.constant(zx);
  batch.z_h = tape.constant(zh);
  batch.t_embed = temb;
  batch.mask = mask;
  batch.offsets = offsets;
  if (prior_x && prior_h && prior_offsets.back() > 0) {
    batch.prior_x_padded = pad_prior(*prior_x, prior_offsets, offsets, tape);
    batch.prior_h_padded = pad_prior(*prior_h, prior_offsets, offsets, tape);
  } else {
    batch.prior_x_padded = tape.constant(Matrix::Zero(total, 3));
    batch.prior_h_padded = tape.constant(Matrix::Zero(total, latent_dim));
  }
  PredictionVars pred = denoiser_forward(p, cfg, batch);
  return add(sum(square(sub(tape.constant(ex), pred.eps_x))),
             sum(square(sub(tape.constant(eh), pred.eps_h))));
}

double dsdm_loss(const DiffusionState &z0, const LatentPrior &prior,
                 const NoiseSchedule &schedule, const Denoiser &denoiser,
                 const DsdmNoise &noise) {
  const int n = static_cast<int>(z0.x.rows());
  DiffusionState zt = q_sample(z0, noise.t, schedule, noise.eps);
  DenoiserInput in = build_condition(zt.x, zt.h, noise.t, schedule.T, prior, n);
  NoisePrediction pred = denoiser(in);
  return (noise.eps.x - pred.eps_x).squaredNorm() + (noise.eps.h - pred.eps_h).squaredNorm();
}

double dsdm_loss(const DiffusionState &z0, const LatentPrior &prior,
                 const NoiseSchedule &schedule, const Denoiser &denoiser,
                 std::uint64_t seed) {
  Rng rng = make_rng(seed, 2);
  DsdmNoise noise = DsdmNoise::sample(rng, static_cast<int>(z0.x.rows()),
                                      static_cast<int>(z0.h.cols()), schedule.T);
  return dsdm_loss(z0, prior, schedule, denoiser, noise);
}

Matrix reverse_update(const Matrix &z, const Matrix &eps_hat, const Matrix &noise,
                      double alpha_bar_t, double alpha_bar_prev) {
  const double beta = 1.0 - alpha_bar_t / alpha_bar_prev;
  const double rho = std::sqrt(beta * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar_t));
  return (z - (beta / std::sqrt(1.0 - alpha_bar_t)) * eps_hat) / std::sqrt(1.0 - beta) +
         rho * noise;
}

DiffusionState denoise_step(const DiffusionState &z, int t, const LatentPrior &prior,
                            const NoiseSchedule &schedule, const Denoiser &denoiser,
                            const DiffusionState &noise) {
  check_step(t, schedule);
  const int n = static_cast<int>(z.x.rows());
  DenoiserInput in = build_condition(z.x, z.h, t, schedule.T, prior, n);
  NoisePrediction pred = denoiser(in);
  const double ab = schedule.alpha_bar[t], ab_prev = schedule.alpha_bar[t - 1];
  DiffusionState out;
  out.x = center_of_gravity_project(reverse_update(z.x, pred.eps_x, noise.x, ab, ab_prev));
  out.h = reverse_update(z.h, pred.eps_h, noise.h, ab, ab_prev);
  return out;
}

double integrated_normal_mass(double mu, double sd, double level) {
  const double lo = level - 0.5, hi = level + 0.5;
  if (!(sd > 0)) return (mu >= lo && mu < hi) ? 1.0 : 0.0;
  const double k = 1.0 / (sd * std::numbers::sqrt2);
  return 0.5 * (std::erfc((lo - mu) * k) - std::erfc((hi - mu) * k));
}

MolecularPointCloud final_decode(const DiffusionState &z1, const NoiseSchedule &schedule,
                                 const NoisePrediction &eps, const DecodeSpec &spec) {
  const double a = schedule.alpha(1), s = schedule.sigma(1);
  const int n = static_cast<int>(z1.x.rows());
  Matrix x = center_of_gravity_project(z1.x / a - (s / a) * eps.eps_x) /
             spec.scaler.coord_weight;
  Matrix h = z1.h / a - (s / a) * eps.eps_h;
  const int nt = spec.layout.num_types;
  const double sd = s / a / spec.scaler.onehot_weight;
  std::vector<std::string> elements(n);
  std::vector<int> charges(n, 0);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_mass = -1.0;
    for (int c = 0; c < nt; ++c) {
      const double m = integrated_normal_mass(h(i, c) / spec.scaler.onehot_weight, sd, 1.0);
      if (m > best_mass) {
        best_mass = m;
        best = c;
      }
    }
    if (best_mass < 1e-300) h.row(i).head(nt).maxCoeff(&best);
    elements[i] = spec.alphabet.at(best);
    if (spec.layout.has_charge)
      charges[i] = static_cast<int>(std::lround(h(i, nt) / spec.scaler.charge_weight));
  }
  return MolecularPointCloud::from_atoms(elements, x, charges, spec.alphabet,
                                         spec.layout.has_charge);
}

SamplerNoise SamplerNoise::draw(Rng &rng, int atoms, int feature_dim, int T) {
  SamplerNoise n;
  n.initial = sample_noise(rng, atoms, feature_dim);
  n.steps.resize(T + 1);
  for (int t = T; t >= 2; --t) n.steps[t] = sample_noise(rng, atoms, feature_dim);
  return n;
}

SamplerNoise SamplerNoise::rotated(const Eigen::Matrix3d &rotation) const {
  SamplerNoise n = *this;
  n.initial.x = initial.x * rotation.transpose();
  for (DiffusionState &s: n.steps)
    if (s.x.size() > 0) s.x = s.x * rotation.transpose();
  return n;
}

MolecularPointCloud sample(const LatentPrior &prior, int atom_count,
                           const NoiseSchedule &schedule, const Denoiser &denoiser,
                           const DecodeSpec &spec, const SamplerNoise &noise,
                           const TrajectoryObserver &observer) {
  if (atom_count < prior.size())
    throw std::invalid_argument("atom count smaller than prior");
  if (atom_count < 1) throw std::invalid_argument("atom count must be positive");
  if (static_cast<int>(noise.steps.size()) != schedule.T + 1)
    throw std::invalid_argument("sampler noise does not match the schedule");
  DiffusionState z = noise.initial;
  z.x = center_of_gravity_project(z.x);
  for (int t = schedule.T; t >= 2; --t) {
    if (observer) observer(t, z);
    try {
      z = denoise_step(z, t, prior, schedule, denoiser, noise.steps[t]);
    } catch (const NonFiniteError &e) {
      throw NonFiniteError("sampling diverged at t=" + std::to_string(t) + ": " + e.what());
    }
  }
  if (observer) observer(1, z);
  DenoiserInput in = build_condition(z.x, z.h, 1, schedule.T, prior, atom_count);
  return final_decode(z, schedule, denoiser(in), spec);
}

MolecularPointCloud sample(const LatentPrior &prior, int atom_count,
                           const NoiseSchedule &schedule, const Denoiser &denoiser,
                           const DecodeSpec &spec, std::uint64_t seed,
                           const TrajectoryObserver &observer) {
  Rng rng = make_rng(seed, 3);
  SamplerNoise noise = SamplerNoise::draw(rng, atom_count, spec.layout.width(), schedule.T);
  return sample(prior, atom_count, schedule, denoiser, spec, noise, observer);
}

}  // namespace priorgen
