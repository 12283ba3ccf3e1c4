//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

// Acceptance run: one PASS/FAIL/SKIP line per criterion.  Exit status is
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <string>

#include "CLI11.hpp"
#include "priorgen/generate.h"
#include "priorgen/pipeline.h"
#include "priorgen/training.h"
#include "priorgen/verify.h"

namespace fs = std::filesystem;
using namespace priorgen;

namespace {

enum class Outcome { pass, fail, skip };

struct Verdict {
  Outcome outcome = Outcome::fail;
  std::string summary;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char *f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Runs verify suites; passes when every check passes within `budget` seconds.
Verdict suites(const std::vector<std::string> &names, double budget, std::uint64_t seed) {
  const auto start = Clock::now();
  VerifyOptions o;
  o.seed = seed;
  int failed = 0, total = 0;
  std::string worst;
  for (const auto &s: names)
    for (const CheckResult &c: run_verify_suite(s, o)) {
      std::printf("    %s\n", format_check(c).c_str());
      ++total;
      if (!c.passed) {
        ++failed;
        worst += (worst.empty() ? "" : ", ") + c.name;
      }
    }
  const double secs = since(start);
  Verdict v;
  v.outcome = failed == 0 && (budget <= 0 || secs <= budget) ? Outcome::pass : Outcome::fail;
  v.summary = std::to_string(total - failed) + "/" + std::to_string(total) + " checks, " +
              fmt("%.1f s", secs) + (budget > 0 ? fmt(" (budget %.0f s)", budget) : "");
  if (failed > 0) v.summary += "; failing: " + worst;
  return v;
}

// ---- criterion 7 ------------------------------------------------------------

std::optional<DataSource> find_qm9() {
  const char *dir = std::getenv(kDataDirEnv);
  if (dir == nullptr || *dir == '\0') return std::nullopt;
  const fs::path root(dir);
  for (const char *name: {"qm9", "QM9", "dsgdb9nsd"})
    if (fs::is_directory(root / name))
      return DataSource{(root / name).string(), DatasetFormat::xyz_dir, XyzDialect::qm9};
  for (const char *name: {"qm9.xyz", "QM9.xyz"})
    if (fs::is_regular_file(root / name))
      return DataSource{(root / name).string(), DatasetFormat::concatenated_xyz, XyzDialect::qm9};
  return std::nullopt;
}

Verdict dataset_statistics() {
  auto source = find_qm9();
  if (!source)
    return {Outcome::skip, std::string("QM9 not found under $") + kDataDirEnv +
                               " (qm9/ directory or qm9.xyz)"};
  Dataset ds = load_source(*source);
  const double n = static_cast<double>(ds.molecules.size());
  bool ok = true;
  std::string out = std::to_string(ds.molecules.size()) + " molecules";

  // Ring histogram, percentage points.
  const double expected_rings[] = {10.2, 39.3, 27.6, 15.1, 4.4, 2.7, 0.6, 0.2, 0.0};
  std::vector<int> counts(9, 0);
  long atoms = 0, stable_atoms = 0, stable_mols = 0;
  for (const auto &mol: ds.molecules) {
    BondGraph g = infer_bonds(mol);
    ++counts[std::min(ring_count(g), 8)];
    AtomStability a = atom_stability(g);
    atoms += static_cast<long>(a.stable.size());
    stable_atoms += a.stable_count;
    stable_mols += molecule_stability(g) ? 1 : 0;
  }
  double ring_dev = 0;
  for (int r = 0; r < 9; ++r)
    ring_dev = std::max(ring_dev, std::abs(100.0 * counts[r] / n - expected_rings[r]));
  ok = ok && ring_dev <= 0.3;
  out += fmt("; ring histogram max dev %.2f pp (tol 0.3)", ring_dev);

  // Scaffold split sizes, relative deviation.
  DatasetManifest m = split_by_scaffold_frequency(ds);
  const std::pair<const char *, std::pair<double, double>> expected_split[] = {
      {kSplitInDist, {100000, 1054}}, {kSplitOod1, {15000, 2532}}, {kSplitOod2, {15831, 12075}}};
  double split_dev = 0;
  for (const auto &[name, sizes]: expected_split) {
    split_dev = std::max(split_dev, std::abs(m.molecule_count(name) / sizes.first - 1.0));
    split_dev = std::max(split_dev, std::abs(m.scaffold_count(name) / sizes.second - 1.0));
  }
  ok = ok && split_dev <= 0.02;
  out += fmt("; scaffold split max dev %.1f%% (tol 2%%)", 100 * split_dev);

  const double as = 100.0 * stable_atoms / static_cast<double>(atoms);
  const double ms = 100.0 * stable_mols / n;
  ok = ok && std::abs(as - 99.0) <= 1.0 && std::abs(ms - 95.2) <= 1.0;
  out += fmt("; atom stability %.1f%% (99.0 +-1)", as) + fmt(", molecule stability %.1f%% (95.2 +-1)", ms);
  return {ok ? Outcome::pass : Outcome::fail, out};
}

// ---- criteria 8 and 9 ---------------------------------------------------------

RunConfig desk_config() {
  RunConfig c;
  c.model.eaae.encoder.num_layers = 1;
  c.model.eaae.encoder.hidden_dim = 64;
  c.model.eaae.decoder.num_layers = 4;
  c.model.eaae.decoder.hidden_dim = 64;
  c.model.denoiser.num_layers = 4;
  c.model.denoiser.hidden_dim = 64;
  c.model.diffusion_steps = 100;
  c.train.learning_rate = 1e-3;
  c.train.batch_size = 32;
  c.train.max_steps = 2000;
  c.train.seed = 2026;
  c.train.log_every = 250;
  return c;
}

void progress(const LogRecord &r) {
  std::printf("    %s\n", format_log_record(r).c_str());
  std::fflush(stdout);
}

Verdict ood_demonstration(int samples) {
  const auto start = Clock::now();
  RunConfig cfg = desk_config();
  Dataset train_set;
  train_set.molecules = generate_toy_dataset(8, 2000, {0, 1});
  DatasetManifest manifest = split_by_ring_count(train_set, {0, 1}, {2});
  std::vector<PreparedPair> pairs =
      prepare_pairs(split_pairs(manifest, train_set, kSplitTrain), cfg.model.scaler);
  TrainState state = init_train_state(cfg.model, cfg.train.seed);
  TrainHooks hooks;
  hooks.on_log = progress;
  train(state, cfg, pairs, cfg.train.max_steps, hooks);
  const double train_secs = since(start);

  // Held-out two-ring substructures from an independent toy draw.
  Dataset held;
  held.molecules = generate_toy_dataset(9, samples, {2});
  std::vector<int> ids(held.molecules.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<TrainingPair> held_pairs =
      extract_training_pairs(held, ids, SubstructureKind::ring_system).pairs;
  if (held_pairs.empty()) return {Outcome::fail, "no held-out substructures"};

  const ModelConfig &model = cfg.model;
  const ParamSet &params = state.ema;
  std::vector<BondGraph> conditioned, baseline;
  int diverged = 0;
  for (int i = 0; i < samples; ++i) {
    const TrainingPair &tp = held_pairs[i % held_pairs.size()];
    Rng rng = make_rng(cfg.train.seed, 0x4f4f4400000000ULL + i);
    try {
      LatentPrior prior = encode_substructure(tp.sub->cloud, model, params, rng);
      const int n = draw_atom_count(manifest.delta_histogram, tp.sub->atom_count(), rng);
      conditioned.push_back(infer_bonds(generate_molecule(model, params, prior, n, rng())));
    } catch (const NonFiniteError &) {
      ++diverged;
      conditioned.push_back(BondGraph{});
    }
    try {
      const int n = draw_atom_count(manifest.size_histogram, 0, rng);
      baseline.push_back(
          infer_bonds(generate_molecule(model, params, zero_prior(model), n, rng())));
    } catch (const NonFiniteError &) {
      ++diverged;
      baseline.push_back(BondGraph{});
    }
  }
  auto proportion = [](const std::vector<BondGraph> &gs) {
    int hit = 0;
    for (const auto &g: gs) hit += g.atom_count() > 0 && ring_count(g) == 2 ? 1 : 0;
    return 100.0 * hit / static_cast<double>(gs.size());
  };
  const double p_cond = proportion(conditioned), p_base = proportion(baseline);
  const double ratio = p_base > 0 ? p_cond / p_base : (p_cond > 0 ? INFINITY : 0.0);
  const double secs = since(start);
  Verdict v;
  v.outcome = ratio >= 3.0 && secs <= 1800 ? Outcome::pass : Outcome::fail;
  v.summary = fmt("P(2 rings) conditioned %.1f%%", p_cond) + fmt(" vs zero prior %.1f%%", p_base) +
              fmt(", ratio %.2f (need >= 3)", ratio) + ", " + std::to_string(samples) +
              " samples each" + (diverged ? ", " + std::to_string(diverged) + " diverged" : "") +
              fmt(", train %.0f s", train_secs) + fmt(", total %.0f s (budget 1800 s)", secs);
  return v;
}

/// Aligned RMSD minimised over atom correspondences (proper rotations only).
double correspondence_rmsd(const Matrix &a, const Matrix &b) {
  const int n = static_cast<int>(a.rows());
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  Matrix p(n, 3);
  do {
    for (int i = 0; i < n; ++i) p.row(i) = a.row(perm[i]);
    best = std::min(best, aligned_rmsd(p, b));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Verdict overfit_one(int samples) {
  const auto start = Clock::now();
  RunConfig cfg = desk_config();
  cfg.train.learning_rate = 3e-3;
  cfg.train.batch_size = 16;
  Dataset ds;
  ds.molecules = generate_toy_dataset(21, 4, {1});
  std::vector<int> ids{0};
  std::vector<TrainingPair> one =
      extract_training_pairs(ds, ids, SubstructureKind::scaffold).pairs;
  if (one.size() != 1) return {Outcome::fail, "toy molecule has no scaffold"};
  std::vector<PreparedPair> pairs = prepare_pairs(one, cfg.model.scaler);
  TrainState state = init_train_state(cfg.model, cfg.train.seed);
  TrainHooks hooks;
  hooks.on_log = progress;
  train(state, cfg, pairs, cfg.train.max_steps, hooks);

  const Matrix ref = one[0].mol.coords;
  double worst = 0, mean = 0;
  int diverged = 0;
  for (int s = 0; s < samples; ++s) {
    Rng rng = make_rng(cfg.train.seed, 0x4f56455200000000ULL + s);
    try {
      LatentPrior prior = encode_substructure(one[0].sub->cloud, cfg.model, state.ema, rng);
      MolecularPointCloud mol =
          generate_molecule(cfg.model, state.ema, prior, one[0].mol.atom_count(), rng());
      const double r = correspondence_rmsd(mol.coords, ref);
      worst = std::max(worst, r);
      mean += r / samples;
    } catch (const NonFiniteError &) {
      ++diverged;
      worst = INFINITY;
    }
  }
  Verdict v;
  v.outcome = worst < 0.1 ? Outcome::pass : Outcome::fail;
  v.summary = std::to_string(one[0].mol.atom_count()) + " atoms, " + std::to_string(samples) +
              " samples: worst aligned RMSD " + fmt("%.3f A", worst) + fmt(", mean %.3f A", mean) +
              " (need < 0.1 A)" + (diverged ? ", " + std::to_string(diverged) + " diverged" : "") +
              fmt(", %.0f s", since(start));
  return v;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"priorgen acceptance criteria"};
  std::vector<int> only;
  std::uint64_t seed = 0;
  int ood_samples = 100, overfit_samples = 5;
  app.add_option("--criteria", only, "Subset of criteria to run (1-9)")->delimiter(',');
  app.add_option("--seed", seed, "Seed of the property suites");
  app.add_option("--ood-samples", ood_samples, "Samples per arm of criterion 8");
  app.add_option("--overfit-samples", overfit_samples, "Samples of criterion 9");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"1 equivariance", [&] { return suites({"equivariance"}, 120, seed); }},
      {"2 invariance", [&] { return suites({"invariance"}, 120, seed); }},
      {"3 zero-CoG discipline", [&] { return suites({"cog"}, 0, seed); }},
      {"4 gradient checks", [&] { return suites({"gradient"}, 0, seed); }},
      {"5 forward-process fidelity", [&] { return suites({"marginal"}, 0, seed); }},
      {"6 chemistry oracles", [&] { return suites({"chemistry"}, 0, seed); }},
      {"7 dataset statistics (QM9)", dataset_statistics},
      {"8 desk-scale OOD steering", [&] { return ood_demonstration(ood_samples); }},
      {"9 overfit-one", [&] { return overfit_one(overfit_samples); }},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (!only.empty() && std::find(only.begin(), only.end(), static_cast<int>(k + 1)) == only.end())
      continue;
    std::printf("[criterion %s]\n", criteria[k].first.c_str());
    std::fflush(stdout);
    Verdict v;
    try {
      v = criteria[k].second();
    } catch (const std::exception &e) {
      v = {Outcome::fail, std::string("error: ") + e.what()};
    }
    const char *tag = v.outcome == Outcome::pass ? "PASS" : v.outcome == Outcome::skip ? "SKIP" : "FAIL";
    std::printf("%s criterion %s: %s\n", tag, criteria[k].first.c_str(), v.summary.c_str());
    std::fflush(stdout);
    failed += v.outcome == Outcome::fail ? 1 : 0;
  }
  return failed == 0 ? 0 : 1;
}
