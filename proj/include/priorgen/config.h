//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef PRIORGEN_CONFIG_H_
#define PRIORGEN_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "priorgen/chem.h"
#include "priorgen/core.h"
#include "priorgen/diffusion.h"
#include "priorgen/eaae.h"
#include "priorgen/egnn.h"

namespace priorgen {

/// Raised for malformed, unknown or out-of-range configuration values.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  std::vector<std::string> alphabet = default_alphabet();
  bool has_charge = true;
  FeatureScaler scaler;
  EaaeConfig eaae;
  EgnnConfig denoiser{.num_layers = 9, .hidden_dim = 256};
  int diffusion_steps = 1000;
  ScheduleKind schedule = ScheduleKind::polynomial;

  FeatureLayout layout() const { return {static_cast<int>(alphabet.size()), has_charge}; }
  DecodeSpec decode_spec() const { return {scaler, layout(), alphabet}; }
  void validate() const;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 64;
  int epochs = 1;
  /// Overrides `epochs` when positive.
  long max_steps = 0;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double ema_decay = 0.999;
  double clip_norm = 1.0;
  double dsdm_weight = 1.0;
  long checkpoint_every = 1000;
  long log_every = 50;
  /// Steps between bound diagnostics in the metrics log, 0 to disable.
  long bound_every = 0;

  void validate() const;
};

struct SampleConfig {
  bool use_ema = true;
  /// Fixed atom count; 0 draws N' + delta from the training histogram.
  int atoms = 0;
  std::uint64_t seed = 0;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SampleConfig sample;

  /// Applies one `key=value` assignment.  Unknown keys throw ConfigError.
  void set(std::string_view key, std::string_view value);
  /// Parses `key = value` lines; '#' starts a comment.
  void apply_text(std::string_view text, std::string_view source = "<config>");
  void apply_file(const std::filesystem::path &path);
  void apply_overrides(const std::vector<std::string> &assignments);

  /// Every schema key with its current value, sorted by key.
  std::map<std::string, std::string> entries() const;
  std::string to_text() const;
  /// SHA-256 over `to_text()`.
  std::string digest() const;
  void validate() const;

  static std::vector<std::string> keys();
};

}  // namespace priorgen

#endif  // PRIORGEN_CONFIG_H_
