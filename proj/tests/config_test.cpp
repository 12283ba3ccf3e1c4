//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "priorgen/config.h"

namespace priorgen {
namespace {

TEST(RunConfig, DefaultsFollowTheHyperparameterTable) {
  RunConfig c;
  EXPECT_EQ(c.train.learning_rate, 1e-4);
  EXPECT_EQ(c.train.batch_size, 64);
  EXPECT_EQ(c.train.ema_decay, 0.999);
  EXPECT_EQ(c.train.clip_norm, 1.0);
  EXPECT_EQ(c.train.dsdm_weight, 1.0);
  EXPECT_EQ(c.model.eaae.encoder.num_layers, 1);
  EXPECT_EQ(c.model.eaae.decoder.num_layers, 9);
  EXPECT_EQ(c.model.denoiser.num_layers, 9);
  EXPECT_EQ(c.model.denoiser.hidden_dim, 256);
  EXPECT_EQ(c.model.eaae.latent_feat_dim, 1);
  EXPECT_EQ(c.model.eaae.sigma0, 0.01);
  EXPECT_EQ(c.model.diffusion_steps, 1000);
  EXPECT_EQ(c.model.schedule, ScheduleKind::polynomial);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, ParsesFileTextAndOverrides) {
  RunConfig c;
  c.apply_text("# desk scale\n"
               "denoiser.layers = 3\n"
               "denoiser.hidden=32   # narrow\n"
               "\n"
               "diffusion.schedule = cosine\n"
               "data.alphabet = C, N, O\n"
               "train.seed = 12345678901\n"
               "eaae.asymmetric = false\n");
  c.apply_overrides({"train.lr=0.003", "denoiser.layers=4"});
  EXPECT_EQ(c.model.denoiser.num_layers, 4);
  EXPECT_EQ(c.model.denoiser.hidden_dim, 32);
  EXPECT_EQ(c.model.schedule, ScheduleKind::cosine);
  EXPECT_EQ(c.model.alphabet, (std::vector<std::string>{"C", "N", "O"}));
  EXPECT_EQ(c.train.seed, 12345678901ULL);
  EXPECT_FALSE(c.model.eaae.asymmetric);
  EXPECT_EQ(c.train.learning_rate, 0.003);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  RunConfig c;
  EXPECT_THROW(c.set("train.learning_rate", "1"), ConfigError);
  EXPECT_THROW(c.set("train.batch_size", "3.5"), ConfigError);
  EXPECT_THROW(c.set("train.lr", "fast"), ConfigError);
  EXPECT_THROW(c.set("eaae.asymmetric", "maybe"), ConfigError);
  EXPECT_THROW(c.set("diffusion.schedule", "linear"), ConfigError);
  EXPECT_THROW(c.apply_text("train.lr 0.1\n"), ConfigError);
  EXPECT_THROW(c.apply_overrides({"train.lr"}), ConfigError);
  try {
    c.apply_text("train.lr = 1e-3\nbogus.key = 1\n", "run.cfg");
    FAIL();
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("bogus.key"), std::string::npos);
  }
}

TEST(RunConfig, ValidationRejectsNegativeLearningRate) {
  RunConfig c;
  c.set("train.lr", "-1e-4");
  EXPECT_THROW(c.validate(), ConfigError);
  c.set("train.lr", "1e-4");
  c.set("train.batch_size", "0");
  EXPECT_THROW(c.validate(), ConfigError);
  c.set("train.batch_size", "1");
  c.set("data.alphabet", "C,C");
  EXPECT_THROW(c.validate(), ConfigError);
  c.set("data.alphabet", "C,N");
  c.set("eaae.sigma0", "0");
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfig, TextRoundTripPreservesDigest) {
  RunConfig a;
  a.apply_overrides({"train.lr=0.00123456789", "denoiser.hidden=48", "scaler.onehot_weight=0.3"});
  RunConfig b;
  b.apply_text(a.to_text());
  EXPECT_EQ(a.to_text(), b.to_text());
  EXPECT_EQ(a.digest(), b.digest());
  EXPECT_EQ(a.digest().size(), 64u);
  b.set("train.seed", "1");
  EXPECT_NE(a.digest(), b.digest());
  EXPECT_EQ(a.entries().size(), RunConfig::keys().size());
}

}  // namespace
}  // namespace priorgen
