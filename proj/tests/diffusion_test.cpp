//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "priorgen/diffusion.h"
#include "test_util.h"

namespace priorgen {
namespace {
constexpr int kD = 6;  // default layout width

EgnnConfig small_denoiser() {
  return {.num_layers = 2, .hidden_dim = 12, .zero_init_coord_head = false};
}

ParamSet make_params(const EgnnConfig &c, std::uint64_t seed) {
  Rng rng(seed);
  ParamSet p;
  init_denoiser_params(p, c, FeatureLayout{}, 1, rng);
  return p;
}

LatentPrior random_prior(Rng &rng, int n_sub) {
  return {center_of_gravity_project(standard_normal(rng, std::max(n_sub, 1), 3))
              .topRows(n_sub),
          standard_normal(rng, n_sub, 1)};
}

DiffusionState random_state(Rng &rng, int n) {
  return {center_of_gravity_project(standard_normal(rng, n, 3)), standard_normal(rng, n, kD)};
}

TEST(Schedule, PolynomialClosedForm) {
  EXPECT_DOUBLE_EQ(polynomial_alpha_bar_raw(0, 1000), 1.0);
  EXPECT_DOUBLE_EQ(polynomial_alpha_bar_raw(500, 1000), 0.5625);
  EXPECT_DOUBLE_EQ(polynomial_alpha_bar_raw(1000, 1000), 0.0);
}

TEST(Schedule, MonotoneWithEndpointBounds) {
  for (ScheduleKind kind: {ScheduleKind::polynomial, ScheduleKind::cosine}) {
    for (int T: {10, 100, 1000}) {
      auto s = make_schedule(T, kind);
      ASSERT_EQ(static_cast<int>(s.alpha_bar.size()), T + 1);
      EXPECT_GE(s.alpha_bar[0], 0.999) << to_string(kind) << " T=" << T;
      EXPECT_LE(s.alpha_bar[T], 1e-4) << to_string(kind) << " T=" << T;
      for (int t = 1; t <= T; ++t) {
        EXPECT_LT(s.alpha_bar[t], s.alpha_bar[t - 1]);
        EXPECT_GT(s.alpha_bar[t], 0.0);
        EXPECT_GE(s.alpha_bar[t] / s.alpha_bar[t - 1], 0.001 - 1e-12);
        EXPECT_GE(s.rho(t), 0.0);
      }
    }
  }
  EXPECT_THROW(make_schedule(1), std::invalid_argument);
}

TEST(Schedule, PolynomialTracksRawFormulaAwayFromEndpoint) {
  auto s = make_schedule(1000);
  EXPECT_NEAR(s.alpha_bar[500], 0.5625, 1e-4);
}

TEST(QSample, ZeroNoiseScalesSignal) {
  auto s = make_schedule(100);
  Rng rng(1);
  auto z0 = random_state(rng, 5);
  DiffusionState zero{Matrix::Zero(5, 3), Matrix::Zero(5, kD)};
  auto zt = q_sample(z0, 40, s, zero);
  EXPECT_LE(test::max_abs(zt.x - s.alpha(40) * z0.x), 1e-15);
  auto near = q_sample(z0, 1, s, sample_noise(rng, 5, kD));
  EXPECT_LE(test::max_abs(near.x - z0.x), 0.05);
  EXPECT_LE(max_abs_column_mean(q_sample(z0, 70, s, sample_noise(rng, 5, kD)).x), 1e-9);
  EXPECT_THROW(q_sample(z0, 0, s, zero), std::out_of_range);
  EXPECT_THROW(q_sample(z0, 101, s, zero), std::out_of_range);
}

TEST(QSample, StepwiseChainMatchesClosedFormMarginal) {
  // Scalar chain z_t = sqrt(1 - beta_t) z_{t-1} + sqrt(beta_t) e versus the
  // closed-form mean sqrt(abar_t / abar_0) z_0 and variance.
  auto s = make_schedule(100);
  Rng rng(2);
  std::normal_distribution<double> normal;
  const int draws = 100000, t = 50;
  const double z0 = 1.3;
  double mean = 0, m2 = 0;
  for (int i = 0; i < draws; ++i) {
    double z = z0;
    for (int k = 1; k <= t; ++k) {
      const double b = s.beta(k);
      z = std::sqrt(1 - b) * z + std::sqrt(b) * normal(rng);
    }
    mean += z;
    m2 += z * z;
  }
  mean /= draws;
  const double var = m2 / draws - mean * mean;
  const double ratio = s.alpha_bar[t] / s.alpha_bar[0];
  const double expect_mean = std::sqrt(ratio) * z0, expect_var = 1 - ratio;
  EXPECT_LE(std::abs(mean - expect_mean), 3 * std::sqrt(expect_var / draws));
  EXPECT_LE(std::abs(var - expect_var), 3 * expect_var * std::sqrt(2.0 / (draws - 1)));
}

TEST(Condition, WidthAndPadding) {
  Rng rng(3);
  Matrix zx = center_of_gravity_project(standard_normal(rng, 5, 3));
  Matrix zh4 = standard_normal(rng, 5, 4);
  auto in = build_condition(zx, zh4, 3, 10, random_prior(rng, 2), 5);
  EXPECT_EQ(in.condition_width(), 9);
  EXPECT_EQ(in.prior_count, 2);
  EXPECT_EQ(in.prior_x_padded.bottomRows(3), Matrix::Zero(3, 3));
  EXPECT_EQ(in.prior_h_padded.bottomRows(3), Matrix::Zero(3, 1));
  EXPECT_DOUBLE_EQ(in.t_embed(4, 0), 0.3);

  auto prior = random_prior(rng, 5);
  auto full = build_condition(zx, zh4, 3, 10, prior, 5);
  EXPECT_LE(test::max_abs(full.prior_x_padded - prior.f_x), 1e-15);
  EXPECT_EQ(full.prior_h_padded, prior.f_h);
  EXPECT_THROW(build_condition(zx, zh4, 3, 10, random_prior(rng, 6), 5),
               std::invalid_argument);
}

TEST(Denoiser, EquivariantWithZeroCogOutput) {
  auto cfg = small_denoiser();
  auto params = make_params(cfg, 4);
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 7, n_sub = trial % (n + 1);
    auto z = random_state(rng, n);
    auto prior = random_prior(rng, n_sub);
    Eigen::Matrix3d r = random_rotation(rng);
    auto a = denoise_predict(build_condition(z.x, z.h, 17, 50, prior, n), cfg, params);
    LatentPrior rp{test::rotate(prior.f_x, r), prior.f_h};
    auto b = denoise_predict(build_condition(test::rotate(z.x, r), z.h, 17, 50, rp, n), cfg,
                             params);
    EXPECT_LE(test::max_abs(b.eps_x - test::rotate(a.eps_x, r)), 1e-5);
    EXPECT_LE(test::max_abs(b.eps_h - a.eps_h), 1e-5);
    EXPECT_LE(max_abs_column_mean(a.eps_x), 1e-9);
  }
}

TEST(Denoiser, PermutationEquivariant) {
  auto cfg = small_denoiser();
  auto params = make_params(cfg, 6);
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 3 + trial % 5, n_sub = trial % 3;
    auto z = random_state(rng, n);
    auto prior = random_prior(rng, n_sub);
    // Shuffle prior rows among themselves and the rest among themselves.
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.begin() + n_sub, rng);
    std::shuffle(perm.begin() + n_sub, perm.end(), rng);
    Matrix px(n, 3), ph(n, kD), fx(n_sub, 3), fh(n_sub, 1);
    for (int i = 0; i < n; ++i) {
      px.row(i) = z.x.row(perm[i]);
      ph.row(i) = z.h.row(perm[i]);
      if (i < n_sub) {
        fx.row(i) = prior.f_x.row(perm[i]);
        fh.row(i) = prior.f_h.row(perm[i]);
      }
    }
    auto a = denoise_predict(build_condition(z.x, z.h, 5, 50, prior, n), cfg, params);
    auto b = denoise_predict(build_condition(px, ph, 5, 50, {fx, fh}, n), cfg, params);
    for (int i = 0; i < n; ++i) {
      EXPECT_LE((b.eps_x.row(i) - a.eps_x.row(perm[i])).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_LE((b.eps_h.row(i) - a.eps_h.row(perm[i])).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

/// Denoiser that knows the clean state and returns the exact noise.
Denoiser exact_oracle(const DiffusionState &z0, const NoiseSchedule &s) {
  return [z0, s](const DenoiserInput &in) {
    const int t = static_cast<int>(std::lround(in.t_embed(0, 0) * s.T));
    return NoisePrediction{(in.z_x - s.alpha(t) * z0.x) / s.sigma(t),
                           (in.z_h - s.alpha(t) * z0.h) / s.sigma(t)};
  };
}

/// Untrained network riding on the exact predictor for an all-zero molecule,
/// so long reverse chains stay bounded.
Denoiser damped_network(const EgnnConfig &cfg, const ParamSet &params, const NoiseSchedule &s) {
  auto net = network_denoiser(cfg, params);
  return [net, s](const DenoiserInput &in) {
    const int t = static_cast<int>(std::lround(in.t_embed(0, 0) * s.T));
    auto p = net(in);
    return NoisePrediction{in.z_x / s.sigma(t) + 0.1 * p.eps_x,
                           in.z_h / s.sigma(t) + 0.1 * p.eps_h};
  };
}

Denoiser zero_denoiser() {
  return [](const DenoiserInput &in) {
    return NoisePrediction{Matrix::Zero(in.atom_count(), 3),
                           Matrix::Zero(in.atom_count(), in.z_h.cols())};
  };
}

TEST(DsdmLoss, PerfectPredictorGivesZero) {
  auto s = make_schedule(100);
  Rng rng(8);
  auto z0 = random_state(rng, 6);
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    EXPECT_LE(dsdm_loss(z0, random_prior(rng, 2), s, exact_oracle(z0, s), seed), 1e-18);
}

TEST(DsdmLoss, ZeroPredictorMatchesNoiseEnergy) {
  auto s = make_schedule(100);
  Rng rng(9);
  const int n = 5;
  auto z0 = random_state(rng, n);
  const int draws = 20000;
  double mean = 0, m2 = 0;
  for (int i = 0; i < draws; ++i) {
    const double l = dsdm_loss(z0, LatentPrior{Matrix(0, 3), Matrix(0, 1)}, s,
                               zero_denoiser(), static_cast<std::uint64_t>(i));
    mean += l;
    m2 += l * l;
  }
  mean /= draws;
  const double se = std::sqrt((m2 / draws - mean * mean) / draws);
  // Projected coordinates keep 3(N-1) degrees of freedom.
  const double expect = 3.0 * (n - 1) + n * kD;
  EXPECT_LE(std::abs(mean - expect), 3 * se);
}

TEST(DsdmLoss, InvariantUnderRotation) {
  auto cfg = small_denoiser();
  auto params = make_params(cfg, 10);
  auto s = make_schedule(100);
  auto net = network_denoiser(cfg, params);
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial % 5;
    auto z0 = random_state(rng, n);
    auto prior = random_prior(rng, 1 + trial % n);
    auto noise = DsdmNoise::sample(rng, n, kD, s.T);
    Eigen::Matrix3d r = random_rotation(rng);
    const double a = dsdm_loss(z0, prior, s, net, noise);
    const double b = dsdm_loss({test::rotate(z0.x, r), z0.h},
                               {test::rotate(prior.f_x, r), prior.f_h}, s, net,
                               noise.rotated(r));
    EXPECT_LE(std::abs(a - b), 1e-5);
  }
}

TEST(DsdmLoss, GradientMatchesFiniteDifferences) {
  auto cfg = small_denoiser();
  auto params = make_params(cfg, 12);
  auto s = make_schedule(100);
  Rng rng(13);
  auto z0 = random_state(rng, 4);
  params["prior.x"] = center_of_gravity_project(standard_normal(rng, 2, 3));
  params["prior.h"] = standard_normal(rng, 2, 1);
  auto noise = DsdmNoise::sample(rng, 4, kD, s.T);
  const DiffusionState *ptr = &z0;
  auto fn = [&](Tape &, const ParamBinding &p) {
    return dsdm_forward(p, cfg, std::span(&ptr, 1), p["prior.x"], p["prior.h"], {0, 2}, 1,
                        s, std::span(&noise, 1));
  };
  auto res = gradient_check(fn, params, rng);
  EXPECT_LT(res.max_rel_error, 1e-3) << res.worst;
}

TEST(ReverseStep, NoOpWhenBetaIsZero) {
  Rng rng(14);
  Matrix z = standard_normal(rng, 4, 3), e = standard_normal(rng, 4, 3);
  EXPECT_LE(test::max_abs(reverse_update(z, e, e, 0.5, 0.5) - z), 1e-15);
}

TEST(ReverseStep, ScalarHandCase) {
  const double eps_noise = 0.7;
  Matrix z(1, 1), e(1, 1), n(1, 1);
  z << 1.0;
  e << 0.5;
  n << eps_noise;
  // beta = 0.1 and abar_t = 0.5 imply abar_{t-1} = 0.5 / 0.9.
  const double beta = 0.1, abar = 0.5, abar_prev = 0.5 / 0.9;
  const double rho = std::sqrt(beta * (1 - abar_prev) / (1 - abar));
  const double expect = (1 / std::sqrt(0.9)) * (1.0 - (0.1 / std::sqrt(0.5)) * 0.5) +
                        rho * eps_noise;
  EXPECT_NEAR(rho, 0.2981423969999719, 1e-12);
  EXPECT_NEAR(reverse_update(z, e, n, abar, abar_prev)(0, 0), expect, 1e-12);
}

TEST(ReverseStep, EquivariantAndProjected) {
  auto cfg = small_denoiser();
  auto params = make_params(cfg, 15);
  auto s = make_schedule(50);
  auto net = network_denoiser(cfg, params);
  Rng rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial % 5;
    auto z = random_state(rng, n);
    auto prior = random_prior(rng, 2);
    auto noise = sample_noise(rng, n, kD);
    Eigen::Matrix3d r = random_rotation(rng);
    const int t = 1 + trial * 2;
    auto a = denoise_step(z, t, prior, s, net, noise);
    auto b = denoise_step({test::rotate(z.x, r), z.h}, t,
                          {test::rotate(prior.f_x, r), prior.f_h}, s, net,
                          {test::rotate(noise.x, r), noise.h});
    EXPECT_LE(test::max_abs(b.x - test::rotate(a.x, r)), 1e-5);
    EXPECT_LE(test::max_abs(b.h - a.h), 1e-5);
    EXPECT_LE(max_abs_column_mean(a.x), 1e-9);
  }
  auto z = random_state(rng, 3);
  EXPECT_THROW(denoise_step(z, 0, random_prior(rng, 1), s, net, z), std::out_of_range);
}

TEST(FinalDecode, IntegratedNormalMass) {
  EXPECT_GT(integrated_normal_mass(0.9, 0.3, 1.0), integrated_normal_mass(0.9, 0.3, 0.0));
  // Simpson quadrature of the density over [0.5, 1.5].
  const double mu = 0.9, sd = 0.3;
  const int steps = 2000;
  double acc = 0;
  for (int i = 0; i <= steps; ++i) {
    const double x = 0.5 + i * (1.0 / steps);
    const double f = std::exp(-0.5 * std::pow((x - mu) / sd, 2)) / (sd * std::sqrt(2 * M_PI));
    acc += f * (i == 0 || i == steps ? 1 : (i % 2 ? 4 : 2));
  }
  EXPECT_NEAR(integrated_normal_mass(mu, sd, 1.0), acc / (3.0 * steps), 1e-10);
  EXPECT_EQ(integrated_normal_mass(0.9, 0.0, 1.0), 1.0);
  EXPECT_EQ(integrated_normal_mass(0.4, 0.0, 1.0), 0.0);
}

TEST(FinalDecode, ReadsTypesAndRoundsCharges) {
  auto s = make_schedule(100);
  DecodeSpec spec;
  const double a = s.alpha(1);
  DiffusionState z1{Matrix::Zero(2, 3), Matrix::Zero(2, kD)};
  z1.x(0, 0) = a;
  z1.x(1, 0) = -a;
  // Row 0: latent one-hot peaks at N; charge latent 1.9 (unscaled).
  z1.h(0, 2) = 0.25 * 0.95 * a;
  z1.h(0, 5) = 0.1 * 1.9 * a;
  z1.h(1, 1) = 0.25 * a;
  z1.h(1, 4) = 0.25 * 0.6 * a;
  NoisePrediction zero{Matrix::Zero(2, 3), Matrix::Zero(2, kD)};
  auto mol = final_decode(z1, s, zero, spec);
  EXPECT_EQ(mol.element(0), "N");
  EXPECT_EQ(mol.charge(0), 2);
  EXPECT_EQ(mol.element(1), "C");
  EXPECT_NEAR(mol.coords(0, 0), 1.0, 1e-12);
}

TEST(Sampler, ReproducibleUnderSeed) {
  auto cfg = small_denoiser();
  auto params = make_params(cfg, 17);
  auto s = make_schedule(2);
  auto net = network_denoiser(cfg, params);
  Rng rng(18);
  auto prior = random_prior(rng, 2);
  auto a = sample(prior, 5, s, net, DecodeSpec{}, 42);
  auto b = sample(prior, 5, s, net, DecodeSpec{}, 42);
  EXPECT_EQ(a.coords, b.coords);
  EXPECT_EQ(a.features, b.features);
  EXPECT_THROW(sample(random_prior(rng, 3), 2, s, net, DecodeSpec{}, 1),
               std::invalid_argument);
}

TEST(Sampler, RotatingPriorRotatesSample) {
  auto cfg = small_denoiser();
  auto params = make_params(cfg, 19);
  auto s = make_schedule(100);
  auto net = damped_network(cfg, params, s);
  Rng rng(20);
  for (int trial = 0; trial < 3; ++trial) {
    auto prior = random_prior(rng, 3);
    auto noise = SamplerNoise::draw(rng, 6, kD, s.T);
    Eigen::Matrix3d r = random_rotation(rng);
    auto a = sample(prior, 6, s, net, DecodeSpec{}, noise);
    auto b = sample({test::rotate(prior.f_x, r), prior.f_h}, 6, s, net, DecodeSpec{},
                    noise.rotated(r));
    EXPECT_LE(test::max_abs(b.coords - test::rotate(a.coords, r)), 1e-4);
    EXPECT_EQ(b.features, a.features);
  }
}

TEST(Sampler, TrajectoryStaysZeroCog) {
  auto cfg = small_denoiser();
  auto params = make_params(cfg, 21);
  auto s = make_schedule(200);
  Rng rng(22);
  double worst = 0;
  int seen = 0;
  sample(random_prior(rng, 2), 7, s, damped_network(cfg, params, s), DecodeSpec{}, 5,
         [&](int, const DiffusionState &z) {
           worst = std::max(worst, max_abs_column_mean(z.x));
           ++seen;
         });
  EXPECT_EQ(seen, s.T);
  EXPECT_LE(worst, 1e-8);
}

TEST(Sampler, ExactOracleRecoversTheMolecule) {
  auto s = make_schedule(500);
  Rng rng(23);
  auto mol = test::random_molecule(rng, 6);
  auto scaled = scale_features(mol, FeatureScaler{});
  DiffusionState z0{center_of_gravity_project(scaled.coords), scaled.features};
  auto out = sample(LatentPrior{Matrix(0, 3), Matrix(0, 1)}, 6, s, exact_oracle(z0, s),
                    DecodeSpec{}, 7);
  EXPECT_LT(aligned_rmsd(out.coords, mol.coords), 0.1);
  EXPECT_EQ(out.elements(), mol.elements());
  EXPECT_EQ(out.charges(), mol.charges());
}
}  // namespace
}  // namespace priorgen
