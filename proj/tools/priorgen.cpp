//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "priorgen/config.h"
#include "priorgen/generate.h"
#include "priorgen/pipeline.h"
#include "priorgen/training.h"
#include "priorgen/verify.h"

namespace fs = std::filesystem;
using namespace priorgen;

namespace {

/// Bad input from the operator; exits with code 2.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::set<int> parse_int_set(const std::string &text, const std::string &flag) {
  std::set<int> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.insert(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception &) {
      throw UsageError(flag + ": expected comma-separated integers, got '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError(flag + ": empty list");
  return out;
}

std::string file_digest(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

std::string header(const std::string &kind, const std::string &config_digest,
                   std::uint64_t seed) {
  return "# priorgen-" + kind + " version=" + std::to_string(kArtifactVersion) +
         " seed=" + std::to_string(seed) + " config_digest=" + config_digest;
}

void print_histogram_row(const std::string &label, const std::map<int, int> &h) {
  int total = 0;
  for (auto [k, v]: h) total += v;
  std::printf("  %-12s", label.c_str());
  for (int r = 0; r <= 8; ++r) {
    auto it = h.find(r);
    const double pct = total > 0 && it != h.end() ? 100.0 * it->second / total : 0.0;
    std::printf(" %5.1f", pct);
  }
  std::printf("\n");
}

// ---- split ----------------------------------------------------------------

struct SplitArgs {
  DataSource source;
  std::string format = "xyz_dir", dialect = "plain", mode, out;
  std::string train_rings = "0,1,2,3", ood_rings = "4,5,6,7,8";
  int high = 100, low = 10;
};

int cmd_split(const SplitArgs &a) {
  DataSource src = a.source;
  src.format = parse_dataset_format(a.format);
  src.dialect = parse_xyz_dialect(a.dialect);
  if (a.mode != "ring" && a.mode != "scaffold")
    throw UsageError("--mode must be ring or scaffold");
  if (!src.is_toy() && !fs::exists(resolve_data_path(src.spec)))
    throw UsageError("dataset not found: " + src.spec);
  Dataset ds = load_source(src);
  DatasetManifest m;
  if (a.mode == "ring") {
    m = split_by_ring_count(ds, parse_int_set(a.train_rings, "--train-rings"),
                            parse_int_set(a.ood_rings, "--ood-rings"));
  } else {
    if (a.low < 1 || a.high < a.low) throw UsageError("scaffold thresholds need 1 <= low <= high");
    m = split_by_scaffold_frequency(ds, {a.high, a.low});
  }
  stamp_source(m, src);
  m.meta["version"] = std::to_string(kArtifactVersion);
  m.meta["skipped_records"] = std::to_string(ds.skipped);
  write_manifest_file(a.out, m);

  std::printf("%s\n", header("split", "-", 0).c_str());
  std::printf("source %s (%zu molecules, %d skipped)\nrule %s\n", m.source.c_str(),
              ds.molecules.size(), ds.skipped, m.rule.c_str());
  std::printf("  %-12s %9s %9s %7s\n", "split", "molecules", "scaffolds", "share");
  for (const auto &s: m.splits())
    std::printf("  %-12s %9d %9d %6.1f%%\n", s.c_str(), m.molecule_count(s), m.scaffold_count(s),
                100.0 * m.molecule_count(s) / static_cast<double>(m.entries.size()));
  std::printf("ring histogram (%% of split, 0..8 rings)\n");
  print_histogram_row("all", m.ring_histogram());
  for (const auto &s: m.splits()) print_histogram_row(s, m.ring_histogram(s));
  std::printf("manifest %s\n", a.out.c_str());
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string manifest, config, out, resume;
  std::vector<std::string> overrides;
};

RunConfig load_run_config(const std::string &file, const std::vector<std::string> &overrides,
                          RunConfig base = {}) {
  if (!file.empty()) base.apply_file(file);
  base.apply_overrides(overrides);
  base.validate();
  return base;
}

int cmd_train(const TrainArgs &a) {
  if (!fs::exists(a.manifest)) throw UsageError("manifest not found: " + a.manifest);
  DatasetManifest manifest = read_manifest_file(a.manifest);
  Checkpoint ck;
  if (!a.resume.empty()) {
    ck = load_checkpoint(a.resume);
    RunConfig merged = load_run_config(a.config, a.overrides, ck.config);
    RunConfig model_only = ck.config;
    model_only.train = merged.train;
    if (model_only.digest() != merged.digest())
      throw UsageError("--resume accepts overrides of train.* keys only");
    if (merged.train.seed != ck.config.train.seed)
      throw UsageError("--resume cannot change train.seed");
    ck.config = merged;
  } else {
    ck.config = load_run_config(a.config, a.overrides);
    ck.state = init_train_state(ck.config.model, ck.config.train.seed);
  }
  const RunConfig &cfg = ck.config;
  if (cfg.model.alphabet != manifest.alphabet)
    throw UsageError("config alphabet does not match the manifest alphabet");

  Dataset ds = load_source(manifest_source(manifest), manifest.alphabet);
  const std::string split = manifest.training_split();
  std::vector<PreparedPair> pairs = prepare_pairs(split_pairs(manifest, ds, split), cfg.model.scaler);
  if (pairs.empty()) throw UsageError("training split '" + split + "' has no usable pairs");

  fs::create_directories(a.out);
  ck.meta["version"] = std::to_string(kArtifactVersion);
  ck.meta["manifest_digest"] = file_digest(a.manifest);
  ck.meta["source"] = manifest.source;
  ck.meta["pair_kind"] = std::string(to_string(manifest.pair_kind));
  ck.meta["seed"] = std::to_string(cfg.train.seed);
  ck.meta["delta_histogram"] = format_histogram(manifest.delta_histogram);
  ck.meta["size_histogram"] = format_histogram(manifest.size_histogram);
  ck.meta["train_pairs"] = std::to_string(pairs.size());

  const long until = planned_steps(cfg.train, pairs.size());
  std::ofstream log(fs::path(a.out) / "train.log", a.resume.empty() ? std::ios::trunc : std::ios::app);
  const std::string head = header("train", cfg.digest(), cfg.train.seed);
  log << head << " steps=" << until << " pairs=" << pairs.size() << "\n";
  std::printf("%s steps=%ld pairs=%zu\n", head.c_str(), until, pairs.size());

  TrainHooks hooks;
  hooks.on_log = [&](const LogRecord &r) {
    const std::string line = format_log_record(r);
    log << line << "\n" << std::flush;
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
  };
  hooks.on_checkpoint = [&](const TrainState &s) {
    Checkpoint c{cfg, s, ck.meta};
    char name[64];
    std::snprintf(name, sizeof name, "checkpoint-%08ld.ckpt", s.step);
    save_checkpoint(fs::path(a.out) / name, c);
  };
  train(ck.state, cfg, pairs, until, hooks);
  save_checkpoint(fs::path(a.out) / "final.ckpt", ck);
  std::printf("final checkpoint %s (step %ld)\n", (fs::path(a.out) / "final.ckpt").c_str(),
              ck.state.step);
  return 0;
}

// ---- sample ---------------------------------------------------------------

struct SampleArgs {
  std::string checkpoint, out;
  std::vector<std::string> substructures;
  int count = 1, atoms = 0;
  std::uint64_t seed = 0;
  bool raw = false, unconditional = false;
};

struct Condition {
  MolecularPointCloud cloud;
  std::string digest;
  std::string origin;
};

int cmd_sample(const SampleArgs &a) {
  if (a.count < 0) throw UsageError("--count must be >= 0");
  if (a.atoms < 0) throw UsageError("--atoms must be >= 0");
  if (!fs::exists(a.checkpoint)) throw UsageError("checkpoint not found: " + a.checkpoint);
  if (a.unconditional == !a.substructures.empty())
    throw UsageError("give --substructure files or --unconditional (not both)");
  Checkpoint ck = load_checkpoint(a.checkpoint);
  const ModelConfig &model = ck.config.model;

  std::vector<Condition> conditions;
  for (const auto &path: a.substructures) {
    if (!fs::exists(path)) throw UsageError("substructure file not found: " + path);
    XyzReadResult r = read_xyz_file(path, model.alphabet, model.has_charge);
    if (r.records.empty())
      throw UsageError("no substructure in " + path +
                       " parses with the checkpoint alphabet (elements outside it?)");
    if (r.skipped > 0)
      throw UsageError(path + ": " + std::to_string(r.skipped) +
                       " record(s) incompatible with the checkpoint alphabet");
    for (std::size_t k = 0; k < r.records.size(); ++k) {
      const auto &mol = r.records[k].mol;
      conditions.push_back({mol, canonical_hash(infer_bonds(mol)),
                            path + "#" + std::to_string(k)});
    }
  }
  auto hist_of = [&](const char *key) {
    auto it = ck.meta.find(key);
    return it == ck.meta.end() ? std::map<int, int>{} : parse_histogram(it->second);
  };
  const auto delta_hist = hist_of("delta_histogram"), size_hist = hist_of("size_histogram");
  if (a.atoms == 0 && (a.unconditional ? size_hist : delta_hist).empty())
    throw UsageError("checkpoint has no atom-count histogram; pass --atoms");

  fs::create_directories(a.out);
  const ParamSet &params = (a.raw || !ck.config.sample.use_ema) ? ck.state.params : ck.state.ema;
  const std::string digest = ck.config.digest();
  std::vector<std::string> comments(a.count);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < a.count; i = next++) {
      try {
        Rng rng = make_rng(a.seed, 0x53414d5000000000ULL + static_cast<std::uint64_t>(i));
        LatentPrior prior = zero_prior(model);
        std::string cond = "-";
        int n_sub = 0;
        if (!a.unconditional) {
          const Condition &c = conditions[i % conditions.size()];
          prior = encode_substructure(c.cloud, model, params, rng);
          cond = c.digest;
          n_sub = c.cloud.atom_count();
        }
        const int atoms = a.atoms > 0 ? a.atoms
                          : a.unconditional ? draw_atom_count(size_hist, 0, rng)
                                            : draw_atom_count(delta_hist, n_sub, rng);
        if (atoms < n_sub) throw UsageError("--atoms is smaller than the substructure");
        const std::uint64_t sample_seed = rng();
        MolecularPointCloud mol = generate_molecule(model, params, prior, atoms, sample_seed);
        char name[64];
        std::snprintf(name, sizeof name, "sample_%06d.xyz", i);
        const std::string comment = "priorgen-sample version=" + std::to_string(kArtifactVersion) +
                                    " seed=" + std::to_string(a.seed) + " index=" +
                                    std::to_string(i) + " substructure=" + cond +
                                    " config_digest=" + digest;
        write_xyz_file(fs::path(a.out) / name, mol, comment);
        comments[i] = std::string(name) + " " + comment;
      } catch (const NonFiniteError &e) {
        std::lock_guard lock(failure_mutex);
        if (!failure)
          failure = std::make_exception_ptr(
              std::runtime_error("sample " + std::to_string(i) + ": " + e.what()));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned threads =
      std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), a.count));
  if (a.count > 0) {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto &t: pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  if (a.count > 0) {
    std::ofstream prov(fs::path(a.out) / "provenance.txt");
    prov << header("sample", digest, a.seed) << "\n";
    prov << "checkpoint=" << fs::absolute(a.checkpoint).string() << "\n";
    prov << "checkpoint_step=" << ck.state.step << "\n";
    prov << "parameters=" << (&params == &ck.state.ema ? "ema" : "raw") << "\n";
    prov << "count=" << a.count << "\n";
    for (const auto &c: conditions) prov << "condition " << c.digest << " " << c.origin << "\n";
    for (const auto &c: comments) prov << "file " << c << "\n";
  }
  std::printf("%s count=%d out=%s\n", header("sample", digest, a.seed).c_str(), a.count,
              a.out.c_str());
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string generated, manifest, mode, target_rings, out;
  std::vector<std::string> targets;
};

std::map<std::string, std::string> read_provenance(const fs::path &dir) {
  std::map<std::string, std::string> kv;
  std::ifstream in(dir / "provenance.txt");
  std::string line;
  if (std::getline(in, line)) {
    std::istringstream ss(line);
    for (std::string tok; ss >> tok;)
      if (auto eq = tok.find('='); eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return kv;
}

int cmd_eval(const EvalArgs &a) {
  if (!fs::is_directory(a.generated)) throw UsageError("not a directory: " + a.generated);
  if (!fs::exists(a.manifest)) throw UsageError("manifest not found: " + a.manifest);
  TargetMode mode;
  try {
    mode = parse_target_mode(a.mode);
  } catch (const std::exception &e) {
    throw UsageError(e.what());
  }
  if (mode == TargetMode::ring && (a.target_rings.empty() || !a.targets.empty()))
    throw UsageError("ring mode takes --target-rings and no --target files");
  if (mode != TargetMode::ring && !a.target_rings.empty())
    throw UsageError("--target-rings applies to ring mode only");
  if (mode == TargetMode::fragment && a.targets.empty())
    throw UsageError("fragment mode needs --target files");

  DatasetManifest manifest = read_manifest_file(a.manifest);
  Dataset generated;
  try {
    generated = load_dataset(a.generated, DatasetFormat::xyz_dir, XyzDialect::plain, manifest.alphabet);
  } catch (const std::exception &e) {
    throw UsageError(std::string("generated set: ") + e.what());
  }
  Dataset ds = load_source(manifest_source(manifest), manifest.alphabet);
  const std::set<Digest> training = split_hashes(manifest, ds, manifest.training_split());

  MetricTargets targets;
  if (mode == TargetMode::ring) targets.ring_counts = parse_int_set(a.target_rings, "--target-rings");
  for (const auto &path: a.targets) {
    XyzReadResult r = read_xyz_file(path, manifest.alphabet);
    if (r.records.empty()) throw UsageError("no target parsed from " + path);
    for (const auto &rec: r.records) targets.substructures.push_back(infer_bonds(rec.mol));
  }
  if (mode == TargetMode::scaffold && targets.substructures.empty()) {
    // Default targets: scaffolds of every non-training split.
    std::set<Digest> seen;
    for (const auto &e: manifest.entries) {
      if (e.split == manifest.training_split() || e.split == kSplitUnassigned) continue;
      auto sc = murcko_scaffold(infer_bonds(ds.molecules[e.id]));
      if (sc && seen.insert(canonical_hash(*sc)).second) targets.substructures.push_back(*sc);
    }
  }

  // Bond inference is independent per molecule.
  std::vector<BondGraph> graphs(generated.molecules.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < graphs.size(); i = next++)
      graphs[i] = infer_bonds(generated.molecules[i]);
  };
  std::vector<std::thread> pool;
  const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
  for (auto &t: pool) t.join();

  MetricReport r = compute_metrics(graphs, training, targets, mode);
  const auto prov = read_provenance(a.generated);
  const std::string digest = prov.contains("config_digest") ? prov.at("config_digest") : "-";
  const std::uint64_t seed = prov.contains("seed") ? std::stoull(prov.at("seed")) : 0;
  std::ostringstream report;
  report << header("report", digest, seed) << "\n";
  report << "# mode=" << to_string(mode) << " generated=" << fs::absolute(a.generated).string()
         << " manifest_digest=" << file_digest(a.manifest) << "\n";
  write_report(report, r);
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!out) throw std::runtime_error("cannot write " + a.out);
    out << report.str();
  }
  std::printf("%s", report.str().c_str());
  std::printf("\n  %6s %6s %6s %6s %6s %6s %6s\n", "P", "C", "AS", "MS", "V", "N", "S");
  std::printf("  %6.1f %6s %6.1f %6.1f %6.1f %6.1f %6.1f\n", r.P,
              r.coverage_defined ? std::to_string(r.C).substr(0, 5).c_str() : "-", r.AS, r.MS,
              r.V, r.N, r.S);
  return 0;
}

// ---- verify ---------------------------------------------------------------

struct VerifyArgs {
  std::vector<std::string> suites;
  std::uint64_t seed = 0;
  bool inject_cog_fault = false;
};

int cmd_verify(const VerifyArgs &a) {
  std::vector<std::string> suites = a.suites;
  if (suites.empty() || std::find(suites.begin(), suites.end(), "all") != suites.end())
    suites = verify_suites();
  for (const auto &s: suites)
    if (std::find(verify_suites().begin(), verify_suites().end(), s) == verify_suites().end())
      throw UsageError("unknown suite '" + s + "'");
  testing_hooks::set_cog_fault(a.inject_cog_fault);
  VerifyOptions o;
  o.seed = a.seed;
  std::printf("%s\n", header("verify", "-", a.seed).c_str());
  int failed = 0, total = 0;
  for (const auto &s: suites)
    for (const CheckResult &c: run_verify_suite(s, o)) {
      std::printf("%s\n", format_check(c).c_str());
      std::fflush(stdout);
      failed += c.passed ? 0 : 1;
      ++total;
    }
  testing_hooks::set_cog_fault(false);
  std::printf("%d/%d checks passed\n", total - failed, total);
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"priorgen: substructure-steered equivariant diffusion for 3D molecules"};
  app.require_subcommand(1);

  SplitArgs split;
  auto *sp = app.add_subcommand("split", "Split a dataset by ring count or scaffold frequency");
  sp->add_option("--dataset", split.source.spec,
                 "Dataset path (or toy:SEED:SIZE:RINGS); relative paths also resolve under $" +
                     std::string(kDataDirEnv))->required();
  sp->add_option("--format", split.format, "xyz_dir or concatenated_xyz");
  sp->add_option("--dialect", split.dialect, "plain or qm9");
  sp->add_option("--mode", split.mode, "ring or scaffold")->required();
  sp->add_option("--train-rings", split.train_rings, "Ring counts of the training split");
  sp->add_option("--ood-rings", split.ood_rings, "Ring counts of the OOD split");
  sp->add_option("--high", split.high, "Scaffold frequency for in-distribution");
  sp->add_option("--low", split.low, "Scaffold frequency floor of ood_1");
  sp->add_option("--out", split.out, "Manifest file to write")->required();

  TrainArgs tr;
  auto *tp = app.add_subcommand("train", "Train the autoencoder and denoiser jointly");
  tp->add_option("--manifest", tr.manifest)->required();
  tp->add_option("--config", tr.config, "key = value configuration file");
  tp->add_option("--set", tr.overrides, "Override, key=value (repeatable)");
  tp->add_option("--out", tr.out, "Output directory for checkpoints and log")->required();
  tp->add_option("--resume", tr.resume, "Checkpoint to continue from");

  SampleArgs sa;
  auto *smp = app.add_subcommand("sample", "Generate molecules conditioned on substructures");
  smp->add_option("--checkpoint", sa.checkpoint)->required();
  smp->add_option("--substructure", sa.substructures, "XYZ file(s) of conditioning substructures");
  smp->add_flag("--unconditional", sa.unconditional, "Sample with an empty prior");
  smp->add_option("--count", sa.count, "Number of molecules");
  smp->add_option("--seed", sa.seed);
  smp->add_option("--atoms", sa.atoms, "Fixed atom count (default: checkpoint histogram)");
  smp->add_flag("--raw", sa.raw, "Use raw parameters instead of the EMA shadow");
  smp->add_option("--out", sa.out, "Output directory")->required();

  EvalArgs ev;
  auto *evp = app.add_subcommand("eval", "Compute the metric report of a generated set");
  evp->add_option("--generated", ev.generated, "Directory of generated XYZ files")->required();
  evp->add_option("--manifest", ev.manifest)->required();
  evp->add_option("--mode", ev.mode, "ring, scaffold or fragment")->required();
  evp->add_option("--target-rings", ev.target_rings, "Desired ring counts (ring mode)");
  evp->add_option("--target", ev.targets, "XYZ file(s) of target scaffolds or fragments");
  evp->add_option("--out", ev.out, "Report file");

  VerifyArgs vf;
  auto *vp = app.add_subcommand("verify", "Run the oracle suites");
  vp->add_option("--suite", vf.suites, "Suite name or 'all' (repeatable)");
  vp->add_option("--seed", vf.seed);
  vp->add_flag("--inject-cog-fault", vf.inject_cog_fault,
               "Disable centre-of-gravity projection (mutation check)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*sp) return cmd_split(split);
    if (*tp) return cmd_train(tr);
    if (*smp) return cmd_sample(sa);
    if (*evp) return cmd_eval(ev);
    if (*vp) return cmd_verify(vf);
  } catch (const UsageError &e) {
    std::fprintf(stderr, "priorgen: %s\n", e.what());
    return 2;
  } catch (const ConfigError &e) {
    std::fprintf(stderr, "priorgen: %s\n", e.what());
    return 2;
  } catch (const CheckpointError &e) {
    std::fprintf(stderr, "priorgen: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument &e) {
    std::fprintf(stderr, "priorgen: %s\n", e.what());
    return 2;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "priorgen: error: %s\n", e.what());
    return 1;
  }
  return 1;
}
