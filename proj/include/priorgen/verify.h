//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef PRIORGEN_VERIFY_H_
#define PRIORGEN_VERIFY_H_

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace priorgen {

/// Outcome of one named oracle check.  `value` is the measured deviation
/// (or count) compared against `tolerance`.
struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0;
  double tolerance = 0;
  std::string detail;
  /// Wall time of the suite that produced the check.
  double seconds = 0;
};

struct VerifyOptions {
  std::uint64_t seed = 0;
  int transforms = 50;
  int trials = 50;
  int marginal_draws = 100000;
  int sampling_steps = 100;
  int trajectory_steps = 1000;
  int relabelings = 1000;
  int max_graph_nodes = 8;
};

/// equivariance, invariance, cog, gradient, marginal, chemistry.
const std::vector<std::string> &verify_suites();

/// Throws std::invalid_argument for an unknown suite name.
std::vector<CheckResult> run_verify_suite(const std::string &suite,
                                          const VerifyOptions &options = {});

/// "PASS name value=... tol=... (detail) [1.2s]".
std::string format_check(const CheckResult &check);

}  // namespace priorgen

#endif  // PRIORGEN_VERIFY_H_
