//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <gtest/gtest.h>

#include "priorgen/core.h"
#include "priorgen/verify.h"

namespace priorgen {
namespace {

VerifyOptions quick() {
  VerifyOptions o;
  o.seed = 7;
  o.transforms = 6;
  o.trials = 4;
  o.marginal_draws = 20000;
  o.sampling_steps = 30;
  o.trajectory_steps = 60;
  o.relabelings = 100;
  o.max_graph_nodes = 6;
  return o;
}

bool has(const std::vector<CheckResult> &checks, const std::string &name, bool passed) {
  for (const auto &c: checks)
    if (c.name == name) return c.passed == passed;
  return false;
}

TEST(Verify, QuickSuitesPassOnFreshParameters) {
  for (const std::string &suite: verify_suites()) {
    auto checks = run_verify_suite(suite, quick());
    ASSERT_FALSE(checks.empty()) << suite;
    for (const auto &c: checks) {
      EXPECT_TRUE(c.passed) << format_check(c);
      EXPECT_EQ(c.name.rfind(suite + ".", 0), 0u) << c.name;
    }
  }
}

TEST(Verify, BrokenCogProjectionFailsNamedCheck) {
  testing_hooks::set_cog_fault(true);
  auto checks = run_verify_suite("cog", quick());
  testing_hooks::set_cog_fault(false);
  EXPECT_TRUE(has(checks, "cog.trajectory", false));
}

TEST(Verify, UnknownSuiteIsRejected) {
  EXPECT_THROW(run_verify_suite("bogus"), std::invalid_argument);
}

TEST(Verify, FormatNamesOutcome) {
  CheckResult c{"cog.prior", true, 1e-12, 1e-8, "x", 0.25};
  EXPECT_EQ(format_check(c), "PASS cog.prior value=1e-12 tol=1e-08 (x) [0.2s]");
}

}  // namespace
}  // namespace priorgen
