//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "priorgen/verify.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>

#include "priorgen/chem.h"
#include "priorgen/training.h"

namespace priorgen {
namespace {

// Unlabelled connected graphs on 1..8 nodes.
constexpr long kConnectedGraphs[] = {1, 1, 2, 6, 21, 112, 853, 11117};

ModelConfig verify_model(int T) {
  ModelConfig m;
  m.eaae.encoder = {.num_layers = 1, .hidden_dim = 16, .zero_init_coord_head = false};
  m.eaae.decoder = {.num_layers = 2, .hidden_dim = 16, .zero_init_coord_head = false};
  m.denoiser = {.num_layers = 2, .hidden_dim = 16, .zero_init_coord_head = false};
  m.diffusion_steps = T;
  return m;
}

TrainingPair random_pair(Rng &rng, int n, int n_sub) {
  std::uniform_int_distribution<int> type(0, 4), charge(-1, 1);
  std::vector<std::string> elements;
  std::vector<int> charges;
  for (int i = 0; i < n; ++i) {
    elements.push_back(default_alphabet()[type(rng)]);
    charges.push_back(charge(rng));
  }
  TrainingPair pair;
  pair.mol = MolecularPointCloud::from_atoms(elements, standard_normal(rng, n, 3) * 1.5, charges);
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n_sub);
  if (n_sub > 0) {
    pair.sub = Substructure{pair.mol.select(idx), SubstructureKind::fragment};
    pair.index_map = idx;
  }
  return pair;
}

TrainingPair transform_pair(const TrainingPair &pair, const Eigen::Matrix3d &r,
                            const Eigen::Vector3d &t) {
  TrainingPair out = pair;
  out.mol = apply_rigid_transform(pair.mol, r, t);
  if (pair.sub) out.sub->cloud = apply_rigid_transform(pair.sub->cloud, r, t);
  return out;
}

Matrix rotate(const Matrix &m, const Eigen::Matrix3d &r) { return m * r.transpose(); }

double max_abs(const Matrix &m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

std::vector<const PreparedPair *> pointers(const std::vector<PreparedPair> &pairs) {
  std::vector<const PreparedPair *> out;
  for (const auto &p: pairs) out.push_back(&p);
  return out;
}

/// eps = sigma_t z + 0.1 * network: the exact predictor for unit-Gaussian
/// data plus a network perturbation, so long chains stay at unit scale.
Denoiser damped_denoiser(const ModelConfig &cfg, const ParamSet &params,
                         const NoiseSchedule &schedule) {
  Denoiser net = network_denoiser(cfg.denoiser, params);
  return [net, schedule](const DenoiserInput &in) {
    NoisePrediction p = net(in);
    const int t = static_cast<int>(std::lround(in.t_embed(0, 0) * schedule.T));
    const double s = schedule.sigma(t);
    p.eps_x = s * in.z_x + 0.1 * p.eps_x;
    p.eps_h = s * in.z_h + 0.1 * p.eps_h;
    return p;
  };
}

CheckResult bounded(std::string name, double value, double tol, std::string detail = {}) {
  return {std::move(name), std::isfinite(value) && value <= tol, value, tol, std::move(detail)};
}

struct Transform {
  Eigen::Matrix3d r;
  Eigen::Vector3d t;
};

Transform random_transform(Rng &rng) {
  return {random_rotation(rng), Eigen::Vector3d(standard_normal(rng, 3, 1) * 5.0)};
}

std::vector<CheckResult> equivariance_suite(const VerifyOptions &o) {
  const ModelConfig m = verify_model(o.sampling_steps);
  const NoiseSchedule sched = model_schedule(m);
  const FeatureLayout layout = m.layout();
  const ParamSet params = init_model_params(m, o.seed + 101);
  Rng rng = make_rng(o.seed, 0x4551);
  std::vector<CheckResult> out;
  const double tol = 1e-5;

  double enc = 0, dec = 0, den = 0, step = 0;
  for (int k = 0; k < o.transforms; ++k) {
    const int n = 5 + k % 4, n_sub = 2 + k % 3;
    TrainingPair tp = random_pair(rng, n, n_sub);
    const Transform g = random_transform(rng);
    PreparedPair a = prepare_pair(tp, m.scaler);
    PreparedPair b = prepare_pair(transform_pair(tp, g.r, g.t), m.scaler);
    EaaeNoise noise = EaaeNoise::sample(rng, n_sub, decoded_atom_count(a, m.eaae),
                                        m.eaae.latent_feat_dim);
    EncodeResult ea = encode(a.sub_x, a.sub_h, m.eaae, params, noise);
    EncodeResult eb = encode(b.sub_x, b.sub_h, m.eaae, params, noise.rotated(g.r));
    enc = std::max({enc, max_abs(rotate(ea.prior.f_x, g.r) - eb.prior.f_x),
                    max_abs(ea.prior.f_h - eb.prior.f_h)});

    DecodeResult da = decode(ea.prior, n, m.eaae, layout, params, noise.virt_x);
    DecodeResult db = decode(eb.prior, n, m.eaae, layout, params, rotate(noise.virt_x, g.r));
    dec = std::max({dec, max_abs(rotate(da.coords, g.r) - db.coords),
                    max_abs(da.logits - db.logits), max_abs(da.charge - db.charge)});

    const int t = 1 + k % sched.T;
    DiffusionState z = sample_noise(rng, n, layout.width());
    DenoiserInput ia = build_condition(z.x, z.h, t, sched.T, ea.prior, n);
    DenoiserInput ib = build_condition(rotate(z.x, g.r), z.h, t, sched.T, eb.prior, n);
    NoisePrediction pa = denoise_predict(ia, m.denoiser, params);
    NoisePrediction pb = denoise_predict(ib, m.denoiser, params);
    den = std::max({den, max_abs(rotate(pa.eps_x, g.r) - pb.eps_x),
                    max_abs(pa.eps_h - pb.eps_h)});

    const Denoiser net = network_denoiser(m.denoiser, params);
    DiffusionState w = sample_noise(rng, n, layout.width());
    DiffusionState sa = denoise_step(z, std::max(t, 2), ea.prior, sched, net, w);
    DiffusionState sb = denoise_step({rotate(z.x, g.r), z.h}, std::max(t, 2), eb.prior, sched,
                                     net, {rotate(w.x, g.r), w.h});
    step = std::max({step, max_abs(rotate(sa.x, g.r) - sb.x), max_abs(sa.h - sb.h)});
  }
  const std::string d = std::to_string(o.transforms) + " transforms";
  out.push_back(bounded("equivariance.encoder", enc, tol, d));
  out.push_back(bounded("equivariance.decoder", dec, tol, d));
  out.push_back(bounded("equivariance.denoiser", den, tol, d));
  out.push_back(bounded("equivariance.denoise_step", step, tol, d));

  // Whole reverse chain with replayed noise.
  double chain = 0, scale = 0;
  bool types_match = true;
  const Denoiser damped = damped_denoiser(m, params, sched);
  for (int k = 0; k < 3; ++k) {
    TrainingPair tp = random_pair(rng, 6, 3);
    const Transform g = random_transform(rng);
    PreparedPair a = prepare_pair(tp, m.scaler);
    PreparedPair b = prepare_pair(transform_pair(tp, g.r, g.t), m.scaler);
    EaaeNoise en = EaaeNoise::sample(rng, 3, 6, m.eaae.latent_feat_dim);
    LatentPrior fa = encode(a.sub_x, a.sub_h, m.eaae, params, en).prior;
    LatentPrior fb = encode(b.sub_x, b.sub_h, m.eaae, params, en.rotated(g.r)).prior;
    SamplerNoise sn = SamplerNoise::draw(rng, 6, layout.width(), sched.T);
    MolecularPointCloud xa = sample(fa, 6, sched, damped, m.decode_spec(), sn);
    MolecularPointCloud xb = sample(fb, 6, sched, damped, m.decode_spec(), sn.rotated(g.r));
    chain = std::max(chain, max_abs(rotate(xa.coords, g.r) - xb.coords));
    scale = std::max(scale, max_abs(xa.coords));
    types_match = types_match && xa.features == xb.features;
  }
  CheckResult c = bounded("equivariance.sampling", chain, 1e-4,
                          "T=" + std::to_string(sched.T) + ", 3 runs, max |x| " +
                              std::to_string(scale));
  if (!types_match) {
    c.passed = false;
    c.detail += ", decoded features differ";
  }
  out.push_back(c);
  return out;
}

std::vector<CheckResult> invariance_suite(const VerifyOptions &o) {
  const ModelConfig m = verify_model(100);
  const NoiseSchedule sched = model_schedule(m);
  const ParamSet params = init_model_params(m, o.seed + 202);
  Rng rng = make_rng(o.seed, 0x494e56);
  double eaae = 0, joint = 0;
  for (int k = 0; k < o.trials; ++k) {
    std::vector<TrainingPair> raw;
    for (int b = 0; b < 3; ++b) raw.push_back(random_pair(rng, 4 + (k + b) % 4, 1 + b));
    const Transform g = random_transform(rng);
    std::vector<PreparedPair> a, b;
    for (const auto &tp: raw) {
      a.push_back(prepare_pair(tp, m.scaler));
      b.push_back(prepare_pair(transform_pair(tp, g.r, g.t), m.scaler));
    }
    EaaeNoise en = EaaeNoise::sample(rng, a[0].n_sub, decoded_atom_count(a[0], m.eaae),
                                     m.eaae.latent_feat_dim);
    const double la = eaae_loss(a[0], m.eaae, m.layout(), params, en).total();
    const double lb = eaae_loss(b[0], m.eaae, m.layout(), params, en.rotated(g.r)).total();
    eaae = std::max(eaae, std::abs(la - lb));

    auto pa = pointers(a), pb = pointers(b);
    StepNoise noise = StepNoise::sample(rng, pa, m);
    const double ja = joint_loss(params, m, sched, pa, noise).total;
    const double jb = joint_loss(params, m, sched, pb, noise.rotated(g.r)).total;
    joint = std::max(joint, std::abs(ja - jb));
  }
  const std::string d = std::to_string(o.trials) + " trials";
  return {bounded("invariance.eaae_loss", eaae, 1e-5, d),
          bounded("invariance.joint_loss", joint, 1e-5, d)};
}

std::vector<CheckResult> cog_suite(const VerifyOptions &o) {
  const ModelConfig m = verify_model(o.trajectory_steps);
  const NoiseSchedule sched = model_schedule(m);
  const ParamSet params = init_model_params(m, o.seed + 303);
  Rng rng = make_rng(o.seed, 0x434f47);
  std::vector<CheckResult> out;

  TrainingPair tp = random_pair(rng, 7, 3);
  PreparedPair pp = prepare_pair(tp, m.scaler);
  EaaeNoise en = EaaeNoise::sample(rng, 3, 7, m.eaae.latent_feat_dim);
  LatentPrior prior = encode(pp.sub_x, pp.sub_h, m.eaae, params, en).prior;
  out.push_back(bounded("cog.prior", max_abs_column_mean(prior.f_x), 1e-8));

  DiffusionState z = sample_noise(rng, 7, m.layout().width());
  NoisePrediction p = denoise_predict(build_condition(z.x, z.h, 5, sched.T, prior, 7),
                                      m.denoiser, params);
  out.push_back(bounded("cog.denoiser_output", max_abs_column_mean(p.eps_x), 1e-8));

  double worst = 0;
  int states = 0;
  SamplerNoise sn = SamplerNoise::draw(rng, 7, m.layout().width(), sched.T);
  MolecularPointCloud mol =
      sample(prior, 7, sched, damped_denoiser(m, params, sched), m.decode_spec(), sn,
             [&](int, const DiffusionState &s) {
               worst = std::max(worst, max_abs_column_mean(s.x));
               ++states;
             });
  worst = std::max(worst, max_abs_column_mean(mol.coords));
  out.push_back(bounded("cog.trajectory", worst, 1e-8,
                        std::to_string(states) + " states, T=" + std::to_string(sched.T)));
  return out;
}

std::vector<CheckResult> gradient_suite(const VerifyOptions &o) {
  ModelConfig m = verify_model(20);
  m.eaae.decoder.hidden_dim = m.denoiser.hidden_dim = m.eaae.encoder.hidden_dim = 8;
  const NoiseSchedule sched = model_schedule(m);
  Rng rng = make_rng(o.seed, 0x475241);
  std::vector<PreparedPair> pairs{prepare_pair(random_pair(rng, 4, 2), m.scaler),
                                  prepare_pair(random_pair(rng, 5, 3), m.scaler)};
  auto batch = pointers(pairs);
  StepNoise noise = StepNoise::sample(rng, batch, m);
  // Away from the schedule end, where the DSDM gradients vanish.
  noise.dsdm[0].t = 3;
  noise.dsdm[1].t = 8;
  const ParamSet params = init_model_params(m, o.seed + 404);

  auto check = [&](const std::string &name,
                   const std::function<Var(const ParamBinding &)> &loss) {
    Rng r = make_rng(o.seed, 0x475242);
    GradCheckResult res =
        gradient_check([&](Tape &, const ParamBinding &p) { return loss(p); }, params, r);
    return bounded(name, res.max_rel_error, 1e-3,
                   std::to_string(res.checked) + " coordinates, worst " + res.worst);
  };
  return {
      check("gradient.eaae_loss",
            [&](const ParamBinding &p) {
              return eaae_forward(p, m.eaae, m.layout(), batch, noise.eaae).total();
            }),
      check("gradient.dsdm_loss",
            [&](const ParamBinding &p) {
              return joint_forward(p, m, sched, batch, noise).l_dsdm;
            }),
      check("gradient.joint_loss",
            [&](const ParamBinding &p) {
              return joint_forward(p, m, sched, batch, noise).total;
            }),
  };
}

std::vector<CheckResult> marginal_suite(const VerifyOptions &o) {
  const NoiseSchedule sched = make_schedule(1000);
  Rng rng = make_rng(o.seed, 0x4d4152);
  const int atoms = 4, width = 6;
  DiffusionState z0{center_of_gravity_project(standard_normal(rng, atoms, 3)),
                    standard_normal(rng, atoms, width) * 0.25};
  const double n = o.marginal_draws;
  std::vector<CheckResult> out;
  for (int t: {1, sched.T / 2, sched.T}) {
    const double a = sched.alpha(t), s = sched.sigma(t);
    double sx = 0, sxx = 0, sh = 0, shh = 0;
    for (int k = 0; k < o.marginal_draws; ++k) {
      DiffusionState zt = q_sample(z0, t, sched, sample_noise(rng, atoms, width));
      const double dx = zt.x(0, 0) - a * z0.x(0, 0), dh = zt.h(0, 0) - a * z0.h(0, 0);
      sx += dx;
      sxx += dx * dx;
      sh += dh;
      shh += dh * dh;
    }
    // Projected coordinate noise has per-entry variance (1 - 1/N).
    const double vx = s * s * (1.0 - 1.0 / atoms), vh = s * s;
    auto z_mean = [&](double sum, double var) { return std::abs(sum / n) / std::sqrt(var / n); };
    auto z_var = [&](double sum, double sq, double var) {
      const double m = sum / n, v = (sq - n * m * m) / (n - 1);
      return std::abs(v - var) / (var * std::sqrt(2.0 / (n - 1)));
    };
    const double worst = std::max({z_mean(sx, vx), z_var(sx, sxx, vx), z_mean(sh, vh),
                                   z_var(sh, shh, vh)});
    out.push_back(bounded("marginal.t" + std::to_string(t), worst, 3.0,
                          "standard errors over " + std::to_string(o.marginal_draws) +
                              " draws, mean and variance of x and h"));
  }
  return out;
}

int gf2_rank(std::vector<unsigned> rows) {
  int rank = 0;
  for (int bit = 0; bit < 32; ++bit) {
    auto pivot = std::find_if(rows.begin() + rank, rows.end(),
                              [&](unsigned r) { return r >> bit & 1u; });
    if (pivot == rows.end()) continue;
    std::swap(*pivot, rows[rank]);
    for (std::size_t k = 0; k < rows.size(); ++k)
      if (static_cast<int>(k) != rank && (rows[k] >> bit & 1u)) rows[k] ^= rows[rank];
    ++rank;
  }
  return rank;
}

BondGraph carbon_graph(int n, std::vector<Bond> bonds) {
  return BondGraph::from_bonds(std::vector<std::string>(n, "C"), std::vector<int>(n, 0),
                               std::move(bonds));
}

CheckResult ring_count_check(const VerifyOptions &o) {
  // Every connected graph has a vertex whose removal keeps it connected, so
  // adding one vertex with a non-empty neighbourhood to each class of size
  // n - 1 reaches every class of size n.
  std::vector<BondGraph> level{carbon_graph(1, {})};
  long mismatches = 0, checked = 0;
  std::string detail;
  for (int n = 1; n <= o.max_graph_nodes; ++n) {
    if (n > 1) {
      std::map<Digest, BondGraph> next;
      for (const BondGraph &g: level)
        for (unsigned nb = 1; nb < (1u << (n - 1)); ++nb) {
          std::vector<Bond> bonds = g.bonds;
          for (int v = 0; v < n - 1; ++v)
            if (nb >> v & 1u) bonds.push_back({v, n - 1, 1});
          BondGraph h = carbon_graph(n, bonds);
          next.try_emplace(canonical_hash(h), h);
        }
      level.clear();
      for (auto &[d, g]: next) level.push_back(std::move(g));
    }
    if (n <= 8 && static_cast<long>(level.size()) != kConnectedGraphs[n - 1]) {
      ++mismatches;
      detail += " n=" + std::to_string(n) + " found " + std::to_string(level.size()) +
                " classes, expected " + std::to_string(kConnectedGraphs[n - 1]) + ";";
    }
    for (const BondGraph &g: level) {
      std::vector<unsigned> incidence;
      for (const Bond &b: g.bonds) incidence.push_back((1u << b.i) | (1u << b.j));
      const int dim = g.bond_count() - gf2_rank(incidence);
      if (ring_count(g) != dim) ++mismatches;
      ++checked;
    }
  }
  return bounded("chemistry.ring_count", static_cast<double>(mismatches), 0,
                 std::to_string(checked) + " connected graphs up to " +
                     std::to_string(o.max_graph_nodes) + " nodes" + detail);
}

CheckResult hash_check(const VerifyOptions &o) {
  Rng rng = make_rng(o.seed, 0x48415348);
  const std::vector<std::string> pool{"C", "N", "O", "H"};
  long mismatches = 0;
  for (int k = 0; k < o.relabelings; ++k) {
    const int n = 1 + k % 9;
    std::vector<std::string> el(n);
    std::vector<int> q(n, 0);
    for (auto &e: el) e = pool[rng() % pool.size()];
    std::vector<Bond> bonds;
    // Random spanning tree plus a few extra edges.
    for (int v = 1; v < n; ++v) bonds.push_back({static_cast<int>(rng() % v), v, 1 + static_cast<int>(rng() % 3)});
    for (int e = 0; e < k % 5 && n > 2; ++e) {
      int i = static_cast<int>(rng() % n), j = static_cast<int>(rng() % n);
      if (i == j) continue;
      if (i > j) std::swap(i, j);
      if (std::find_if(bonds.begin(), bonds.end(), [&](const Bond &b) {
            return std::min(b.i, b.j) == i && std::max(b.i, b.j) == j;
          }) == bonds.end())
        bonds.push_back({i, j, 1});
    }
    BondGraph g = BondGraph::from_bonds(el, q, bonds);
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::string> pel(n);
    for (int a = 0; a < n; ++a) pel[perm[a]] = el[a];
    std::vector<Bond> pb;
    for (const Bond &b: g.bonds) pb.push_back({perm[b.i], perm[b.j], b.order});
    if (canonical_hash(g) != canonical_hash(BondGraph::from_bonds(pel, q, pb))) ++mismatches;
  }
  return bounded("chemistry.hash_invariance", static_cast<double>(mismatches), 0,
                 std::to_string(o.relabelings) + " relabelled isomorphs");
}

CheckResult metrics_check() {
  auto chain = [](int n) {
    std::vector<Bond> b;
    for (int k = 0; k + 1 < n; ++k) b.push_back({k, k + 1, 1});
    return carbon_graph(n, b);
  };
  // Valid+novel, valid but known, duplicate of the first, invalid.
  const BondGraph novel = chain(4), known = chain(5);
  std::vector<BondGraph> generated{novel, known, novel, carbon_graph(2, {})};
  MetricReport r = compute_metrics(generated, {canonical_hash(known)}, MetricTargets{{0}, {}},
                                   TargetMode::ring);
  CheckResult c{"chemistry.metrics_fixture", r.S == 25.0, std::abs(r.S - 25.0), 0,
                "S=" + std::to_string(r.S) + " on the 4-molecule enumeration"};
  return c;
}

std::vector<CheckResult> chemistry_suite(const VerifyOptions &o) {
  return {ring_count_check(o), hash_check(o), metrics_check()};
}

}  // namespace

const std::vector<std::string> &verify_suites() {
  static const std::vector<std::string> kSuites = {"equivariance", "invariance", "cog",
                                                   "gradient",     "marginal",   "chemistry"};
  return kSuites;
}

std::vector<CheckResult> run_verify_suite(const std::string &suite, const VerifyOptions &o) {
  using Runner = std::vector<CheckResult> (*)(const VerifyOptions &);
  static const std::map<std::string, Runner> kRunners = {
      {"equivariance", equivariance_suite}, {"invariance", invariance_suite},
      {"cog", cog_suite},                   {"gradient", gradient_suite},
      {"marginal", marginal_suite},         {"chemistry", chemistry_suite}};
  auto it = kRunners.find(suite);
  if (it == kRunners.end()) throw std::invalid_argument("unknown verify suite '" + suite + "'");
  const auto start = std::chrono::steady_clock::now();
  std::vector<CheckResult> out;
  try {
    out = it->second(o);
  } catch (const std::exception &e) {
    out.push_back({suite + ".run", false, std::nan(""), 0, e.what()});
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (CheckResult &c: out) c.seconds = secs;
  return out;
}

std::string format_check(const CheckResult &c) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s %s value=%.3g tol=%.3g", c.passed ? "PASS" : "FAIL",
                c.name.c_str(), c.value, c.tolerance);
  std::string s = buf;
  if (!c.detail.empty()) s += " (" + c.detail + ")";
  std::snprintf(buf, sizeof buf, " [%.1fs]", c.seconds);
  return s + buf;
}

}  // namespace priorgen
