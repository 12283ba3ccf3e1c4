//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>

#include <gtest/gtest.h>

#include "priorgen/eaae.h"
#include "test_util.h"

namespace priorgen {
namespace {
EaaeConfig small_config() {
  EaaeConfig c;
  c.encoder = {.num_layers = 1, .hidden_dim = 12, .zero_init_coord_head = false};
  c.decoder = {.num_layers = 2, .hidden_dim = 12, .zero_init_coord_head = false};
  return c;
}

ParamSet make_params(const EaaeConfig &c, std::uint64_t seed) {
  Rng rng(seed);
  ParamSet p;
  init_eaae_params(p, c, FeatureLayout{}, rng);
  return p;
}

TEST(Eaae, NoiselessEncodeReturnsMean) {
  auto cfg = small_config();
  auto params = make_params(cfg, 1);
  Rng rng(2);
  auto pair = prepare_pair(test::random_pair(rng, 6, 4), FeatureScaler{});
  auto res = encode(pair.sub_x, pair.sub_h, cfg, params);
  EXPECT_EQ(res.prior.f_x, res.mean.f_x);
  EXPECT_EQ(res.prior.f_h, res.mean.f_h);
  EXPECT_EQ(res.prior.latent_dim(), 1);

  auto noise = EaaeNoise::sample(rng, 4, 6, 1);
  auto noisy = encode(pair.sub_x, pair.sub_h, cfg, params, noise);
  EXPECT_LE(test::max_abs(noisy.prior.f_x - noisy.mean.f_x - cfg.sigma0 * noise.enc_x), 1e-15);
  EXPECT_LE(test::max_abs(noisy.prior.f_h - noisy.mean.f_h - cfg.sigma0 * noise.enc_h), 1e-15);
}

TEST(Eaae, EncodeIsEquivariant) {
  auto cfg = small_config();
  auto params = make_params(cfg, 3);
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 6;
    auto raw = test::random_pair(rng, n + 2, n);
    Eigen::Matrix3d r = random_rotation(rng);
    Eigen::Vector3d t = standard_normal(rng, 3, 1) * 4.0;
    auto a = prepare_pair(raw, FeatureScaler{});
    auto b = prepare_pair(test::transform_pair(raw, r, t), FeatureScaler{});
    auto noise = EaaeNoise::sample(rng, n, n + 2, 1);
    auto ea = encode(a.sub_x, a.sub_h, cfg, params, noise);
    auto eb = encode(b.sub_x, b.sub_h, cfg, params, noise.rotated(r));
    EXPECT_LE(test::max_abs(eb.prior.f_x - test::rotate(ea.prior.f_x, r)), 1e-5);
    EXPECT_LE(test::max_abs(eb.prior.f_h - ea.prior.f_h), 1e-5);
  }
}

TEST(Eaae, LatentIsZeroCog) {
  auto cfg = small_config();
  auto params = make_params(cfg, 5);
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 8;
    Matrix x = standard_normal(rng, n, 3) * 2.0 + Matrix::Constant(n, 3, 5.0);
    auto sub = test::random_molecule(rng, n);
    auto noise = EaaeNoise::sample(rng, n, n, 1);
    auto res = encode(x, scale_features(sub, FeatureScaler{}).features, cfg, params, noise);
    EXPECT_LE(max_abs_column_mean(res.prior.f_x), 1e-6);
  }
}

TEST(Eaae, EmptySubstructureRejected) {
  auto cfg = small_config();
  auto params = make_params(cfg, 7);
  EXPECT_THROW(encode(Matrix(0, 3), Matrix(0, 6), cfg, params), std::invalid_argument);
}

TEST(Eaae, DecodeEquivariantAndDeterministic) {
  auto cfg = small_config();
  auto params = make_params(cfg, 8);
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int n_sub = 1 + trial % 5, n = n_sub + trial % 4;
    LatentPrior prior{center_of_gravity_project(standard_normal(rng, n_sub, 3)),
                      standard_normal(rng, n_sub, 1)};
    Matrix virt = standard_normal(rng, n - n_sub, 3);
    Eigen::Matrix3d r = random_rotation(rng);
    auto a = decode(prior, n, cfg, FeatureLayout{}, params, virt);
    LatentPrior rotated{test::rotate(prior.f_x, r), prior.f_h};
    auto b = decode(rotated, n, cfg, FeatureLayout{}, params, test::rotate(virt, r));
    EXPECT_LE(test::max_abs(b.coords - test::rotate(a.coords, r)), 1e-5);
    EXPECT_LE(test::max_abs(b.logits - a.logits), 1e-5);
    EXPECT_LE(test::max_abs(b.charge - a.charge), 1e-5);
    EXPECT_LE(max_abs_column_mean(a.coords), 1e-9);
    auto again = decode(prior, n, cfg, FeatureLayout{}, params, virt);
    EXPECT_EQ(again.coords, a.coords);
  }
}

TEST(Eaae, DecodeRejectsSmallTarget) {
  auto cfg = small_config();
  auto params = make_params(cfg, 10);
  LatentPrior prior{Matrix::Zero(3, 3), Matrix::Zero(3, 1)};
  try {
    decode(prior, 2, cfg, FeatureLayout{}, params, Matrix(0, 3));
    FAIL();
  } catch (const std::invalid_argument &e) {
    EXPECT_STREQ(e.what(), "target smaller than prior");
  }
}

TEST(Eaae, SymmetricModeReconstructsSubstructureOnly) {
  auto cfg = small_config();
  cfg.asymmetric = false;
  auto params = make_params(cfg, 11);
  Rng rng(12);
  auto pair = prepare_pair(test::random_pair(rng, 7, 3), FeatureScaler{});
  EXPECT_EQ(decoded_atom_count(pair, cfg), 3);
  auto noise = EaaeNoise::sample(rng, 3, 3, 1);
  EXPECT_EQ(noise.virt_x.rows(), 0);
  auto terms = eaae_loss(pair, cfg, FeatureLayout{}, params, noise);
  EXPECT_TRUE(std::isfinite(terms.total()));
}

double kl_quadrature(double mu, double sigma) {
  // Simpson's rule for the integral of q log(q/p) over mu +- 14 sigma.
  const int steps = 20000;
  const double lo = mu - 14 * sigma, hi = mu + 14 * sigma, h = (hi - lo) / steps;
  auto f = [&](double x) {
    const double lq = -0.5 * std::pow((x - mu) / sigma, 2) - std::log(sigma) -
                      0.5 * std::log(2 * M_PI);
    const double lp = -0.5 * x * x - 0.5 * std::log(2 * M_PI);
    return std::exp(lq) * (lq - lp);
  };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < steps; ++i) acc += f(lo + i * h) * (i % 2 ? 4 : 2);
  return acc * h / 3;
}

TEST(Eaae, KlClosedForm) {
  EXPECT_DOUBLE_EQ(gaussian_kl(0.0, 7.0, 1.0), 0.0);
  EXPECT_NEAR(gaussian_kl(0.25, 1.0, 0.01), kl_quadrature(0.5, 0.01), 1e-6);
  EXPECT_NEAR(gaussian_kl(1.0, 1.0, 0.7), kl_quadrature(1.0, 0.7), 1e-6);
  Rng rng(13);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  for (int i = 0; i < 200; ++i) {
    const double mu = u(rng) - 1.5, s = u(rng);
    EXPECT_GT(gaussian_kl(mu * mu, 1.0, s), 0.0);
  }
}

TEST(Eaae, LossIsSe3Invariant) {
  auto cfg = small_config();
  auto params = make_params(cfg, 14);
  Rng rng(15);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + trial % 6, n_sub = 1 + trial % n;
    auto raw = test::random_pair(rng, n, n_sub);
    Eigen::Matrix3d r = random_rotation(rng);
    Eigen::Vector3d t = standard_normal(rng, 3, 1) * 5.0;
    auto a = prepare_pair(raw, FeatureScaler{});
    auto b = prepare_pair(test::transform_pair(raw, r, t), FeatureScaler{});
    auto noise = EaaeNoise::sample(rng, n_sub, n, 1);
    const double la = eaae_loss(a, cfg, FeatureLayout{}, params, noise).total();
    const double lb = eaae_loss(b, cfg, FeatureLayout{}, params, noise.rotated(r)).total();
    EXPECT_LE(std::abs(la - lb), 1e-5);
  }
}

TEST(Eaae, SeededLossIsDeterministic) {
  auto cfg = small_config();
  auto params = make_params(cfg, 16);
  Rng rng(17);
  auto pair = prepare_pair(test::random_pair(rng, 6, 3), FeatureScaler{});
  const double a = eaae_loss(pair, cfg, FeatureLayout{}, params, 99).total();
  const double b = eaae_loss(pair, cfg, FeatureLayout{}, params, 99).total();
  EXPECT_EQ(a, b);
}

TEST(Eaae, IndexMismatchRejected) {
  Rng rng(18);
  auto raw = test::random_pair(rng, 6, 3);
  raw.index_map.pop_back();
  EXPECT_THROW(prepare_pair(raw, FeatureScaler{}), std::invalid_argument);
  auto other = test::random_pair(rng, 6, 3);
  // Point every substructure row at an atom of a different element.
  for (int r = 0; r < 3; ++r) {
    int parent = other.index_map[r];
    int type = other.mol.type_index(parent);
    other.sub->cloud.features.row(r).head(5).setZero();
    other.sub->cloud.features(r, (type + 1) % 5) = 1.0;
  }
  EXPECT_THROW(prepare_pair(other, FeatureScaler{}), std::invalid_argument);
}

TEST(Eaae, GradientMatchesFiniteDifferences) {
  auto cfg = small_config();
  auto params = make_params(cfg, 19);
  Rng rng(20);
  auto pair = prepare_pair(test::random_pair(rng, 5, 3), FeatureScaler{});
  auto noise = EaaeNoise::sample(rng, 3, 5, 1);
  const PreparedPair *ptr = &pair;
  auto fn = [&](Tape &, const ParamBinding &p) {
    return eaae_forward(p, cfg, FeatureLayout{}, std::span(&ptr, 1), std::span(&noise, 1))
        .total();
  };
  auto res = gradient_check(fn, params, rng);
  EXPECT_LT(res.max_rel_error, 1e-3) << res.worst;
}
}  // namespace
}  // namespace priorgen
