//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "priorgen/training.h"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace priorgen {
namespace {

constexpr std::uint64_t kStepStream = 0x5354455000000000ULL;
constexpr std::uint64_t kEpochStream = 0x45504f4300000000ULL;
constexpr const char *kMagic = "PRIORGEN-CHECKPOINT";

std::vector<DiffusionState> z0_states(std::span<const PreparedPair *const> batch) {
  std::vector<DiffusionState> z;
  z.reserve(batch.size());
  for (const PreparedPair *p: batch) z.push_back({p->x, p->h});
  return z;
}

ParamSet zeros_like(const ParamSet &params) {
  ParamSet out;
  for (const auto &[k, v]: params) out[k] = Matrix::Zero(v.rows(), v.cols());
  return out;
}

}  // namespace

void quantize_f32(ParamSet &params) {
  for (auto &[k, v]: params)
    v = v.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
}

ParamSet init_model_params(const ModelConfig &cfg, std::uint64_t seed) {
  cfg.validate();
  ParamSet params;
  Rng rng = make_rng(seed, 11);
  init_eaae_params(params, cfg.eaae, cfg.layout(), rng);
  init_denoiser_params(params, cfg.denoiser, cfg.layout(), cfg.eaae.latent_feat_dim, rng);
  quantize_f32(params);
  return params;
}

NoiseSchedule model_schedule(const ModelConfig &cfg) {
  return make_schedule(cfg.diffusion_steps, cfg.schedule);
}

TrainState init_train_state(const ModelConfig &cfg, std::uint64_t seed) {
  TrainState s;
  s.params = init_model_params(cfg, seed);
  s.ema = s.params;
  s.adam.m = zeros_like(s.params);
  s.adam.v = zeros_like(s.params);
  return s;
}

StepNoise StepNoise::sample(Rng &rng, std::span<const PreparedPair *const> batch,
                            const ModelConfig &cfg) {
  StepNoise n;
  const int T = cfg.diffusion_steps;
  for (const PreparedPair *p: batch) {
    n.eaae.push_back(EaaeNoise::sample(rng, p->n_sub, decoded_atom_count(*p, cfg.eaae),
                                       cfg.eaae.latent_feat_dim));
    n.dsdm.push_back(DsdmNoise::sample(rng, p->atom_count(), static_cast<int>(p->h.cols()), T));
  }
  return n;
}

StepNoise StepNoise::rotated(const Eigen::Matrix3d &rotation) const {
  StepNoise n;
  for (const auto &e: eaae) n.eaae.push_back(e.rotated(rotation));
  for (const auto &d: dsdm) n.dsdm.push_back(d.rotated(rotation));
  return n;
}

JointVars joint_forward(const ParamBinding &p, const ModelConfig &cfg,
                        const NoiseSchedule &schedule,
                        std::span<const PreparedPair *const> batch, const StepNoise &noise,
                        double dsdm_weight) {
  if (batch.empty()) throw std::invalid_argument("empty training batch");
  if (noise.eaae.size() != batch.size() || noise.dsdm.size() != batch.size())
    throw std::invalid_argument("one noise record per pair is required");
  JointVars out;
  out.eaae = eaae_forward(p, cfg.eaae, cfg.layout(), batch, noise.eaae);
  out.l_eaae = out.eaae.total();

  std::vector<DiffusionState> z = z0_states(batch);
  std::vector<const DiffusionState *> zp;
  for (const auto &s: z) zp.push_back(&s);
  std::vector<int> offsets = out.eaae.prior_offsets;
  std::optional<Var> fx, fh;
  if (out.eaae.has_prior) {
    fx = out.eaae.f_x;
    fh = out.eaae.f_h;
  }
  out.l_dsdm = dsdm_forward(p, cfg.denoiser, zp, fx, fh, offsets, cfg.eaae.latent_feat_dim,
                            schedule, noise.dsdm);
  out.total = add(out.l_eaae, scale(out.l_dsdm, dsdm_weight));
  return out;
}

namespace {

LossBreakdown breakdown(const JointVars &j) {
  LossBreakdown b;
  b.eaae_coord = j.eaae.coord.scalar();
  b.eaae_type = j.eaae.type.scalar();
  b.eaae_charge = j.eaae.charge.scalar();
  b.eaae_kl = j.eaae.kl.scalar();
  b.eaae = j.l_eaae.scalar();
  b.dsdm = j.l_dsdm.scalar();
  b.total = j.total.scalar();
  return b;
}

std::string ids_text(const std::vector<int> &ids) {
  std::string s;
  for (int id: ids) s += (s.empty() ? "" : ", ") + std::to_string(id);
  return s;
}

}  // namespace

LossBreakdown joint_loss(const ParamSet &params, const ModelConfig &cfg,
                         const NoiseSchedule &schedule,
                         std::span<const PreparedPair *const> batch, const StepNoise &noise,
                         double dsdm_weight) {
  Tape tape(false);
  ParamBinding p(tape, params);
  return breakdown(joint_forward(p, cfg, schedule, batch, noise, dsdm_weight));
}

NonFiniteLoss::NonFiniteLoss(long s, std::vector<int> ids, const std::string &cause)
    : std::runtime_error("non-finite loss at step " + std::to_string(s) + " (batch ids: " +
                         ids_text(ids) + ")" + (cause.empty() ? "" : ": " + cause)),
      step(s), batch_ids(std::move(ids)) { }

LossBreakdown train_step(TrainState &state, const ModelConfig &model, const TrainConfig &train,
                         const NoiseSchedule &schedule,
                         std::span<const PreparedPair *const> batch, Rng &rng) {
  auto batch_ids = [&] {
    std::vector<int> ids;
    for (const PreparedPair *pr: batch) ids.push_back(pr->id);
    return ids;
  };
  StepNoise noise = StepNoise::sample(rng, batch, model);
  Tape tape;
  ParamBinding p(tape, state.params);
  JointVars j;
  try {
    j = joint_forward(p, model, schedule, batch, noise, train.dsdm_weight);
  } catch (const NonFiniteError &e) {
    throw NonFiniteLoss(state.step, batch_ids(), e.what());
  }
  LossBreakdown out = breakdown(j);
  if (!std::isfinite(out.total)) throw NonFiniteLoss(state.step, batch_ids());
  tape.backward(j.total);
  ParamSet grads = p.gradients();

  double sq = 0;
  for (const auto &[k, g]: grads) sq += g.squaredNorm();
  out.grad_norm = std::sqrt(sq);
  if (!std::isfinite(out.grad_norm)) throw NonFiniteLoss(state.step, batch_ids(), "gradient");
  const double clip =
      train.clip_norm > 0 && out.grad_norm > train.clip_norm ? train.clip_norm / out.grad_norm : 1.0;

  AdamState &adam = state.adam;
  ++adam.step;
  const double b1 = train.adam_beta1, b2 = train.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.step));
  for (auto &[name, w]: state.params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Matrix g = git->second * clip;
    Matrix &m = adam.m[name];
    Matrix &v = adam.v[name];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
    const Matrix mhat = m / c1;
    const Matrix vhat = v / c2;
    w -= (train.learning_rate * mhat.array() / (vhat.array().sqrt() + train.adam_eps)).matrix();
  }
  quantize_f32(state.params);
  quantize_f32(adam.m);
  quantize_f32(adam.v);

  // Warm-up keeps the shadow from averaging in the random initialization.
  const double decay = std::min(train.ema_decay, (1.0 + static_cast<double>(state.step)) /
                                                     (10.0 + static_cast<double>(state.step)));
  for (auto &[name, e]: state.ema) e = decay * e + (1.0 - decay) * state.params.at(name);
  quantize_f32(state.ema);
  ++state.step;
  return out;
}

Rng step_rng(std::uint64_t seed, long step) {
  return make_rng(seed, kStepStream + static_cast<std::uint64_t>(step));
}

std::vector<int> batch_indices(std::size_t n, int batch_size, long step, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("no training pairs");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const std::size_t b = static_cast<std::size_t>(batch_size);
  std::vector<int> out;
  long cached_epoch = -1;
  std::vector<int> perm(n);
  for (std::size_t j = 0; j < b; ++j) {
    const std::size_t pos = static_cast<std::size_t>(step) * b + j;
    const long epoch = static_cast<long>(pos / n);
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), 0);
      Rng rng = make_rng(seed, kEpochStream + static_cast<std::uint64_t>(epoch));
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % n]);
  }
  return out;
}

long planned_steps(const TrainConfig &train, std::size_t pair_count) {
  if (train.max_steps > 0) return train.max_steps;
  const long per_epoch =
      static_cast<long>((pair_count + train.batch_size - 1) / train.batch_size);
  return per_epoch * train.epochs;
}

std::vector<std::pair<int, int>> bound_timesteps(const NoiseSchedule &schedule, int strata) {
  std::vector<std::pair<int, int>> out{{1, 1}};
  const int span = schedule.T - 1;  // t = 2..T
  const int k = std::max(1, std::min(strata, span));
  for (int s = 0; s < k; ++s) {
    const int lo = 2 + static_cast<int>(static_cast<long>(s) * span / k);
    const int hi = 2 + static_cast<int>(static_cast<long>(s + 1) * span / k);  // exclusive
    if (hi > lo) out.emplace_back((lo + hi - 1) / 2, hi - lo);
  }
  return out;
}

double bound_weight(const NoiseSchedule &schedule, int t) {
  if (t <= 1) return -1.0;
  const double beta = schedule.beta(t);
  const double rho = schedule.rho(t);
  return beta * beta / (2.0 * rho * rho * (1.0 - beta) * (1.0 - schedule.alpha_bar[t]));
}

BoundNoise BoundNoise::sample(Rng &rng, std::span<const PreparedPair *const> batch,
                              const ModelConfig &cfg, std::size_t timesteps) {
  BoundNoise n;
  for (const PreparedPair *p: batch) {
    n.eaae.push_back(EaaeNoise::sample(rng, p->n_sub, decoded_atom_count(*p, cfg.eaae),
                                       cfg.eaae.latent_feat_dim));
    auto &row = n.eps.emplace_back();
    for (std::size_t k = 0; k < timesteps; ++k)
      row.push_back(sample_noise(rng, p->atom_count(), static_cast<int>(p->h.cols())));
  }
  return n;
}

BoundNoise BoundNoise::rotated(const Eigen::Matrix3d &rotation) const {
  BoundNoise n;
  for (const auto &e: eaae) n.eaae.push_back(e.rotated(rotation));
  for (const auto &row: eps) {
    auto &r = n.eps.emplace_back();
    for (const auto &s: row) r.push_back({s.x * rotation.transpose(), s.h});
  }
  return n;
}

double variational_bound_diagnostic(std::span<const PreparedPair *const> batch,
                                    const ParamSet &params, const ModelConfig &cfg,
                                    const NoiseSchedule &schedule, const BoundNoise &noise) {
  const auto steps = bound_timesteps(schedule);
  if (noise.eaae.size() != batch.size() || noise.eps.size() != batch.size())
    throw std::invalid_argument("one bound noise record per pair is required");
  const Denoiser denoiser = network_denoiser(cfg.denoiser, params);
  double total = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const PreparedPair &p = *batch[b];
    if (noise.eps[b].size() != steps.size())
      throw std::invalid_argument("bound noise does not match the timestep grid");
    LatentPrior prior{Matrix(0, 3), Matrix(0, cfg.eaae.latent_feat_dim)};
    if (p.n_sub > 0) prior = encode(p.sub_x, p.sub_h, cfg.eaae, params, noise.eaae[b]).prior;
    const DiffusionState z0{p.x, p.h};
    for (std::size_t k = 0; k < steps.size(); ++k) {
      const auto [t, count] = steps[k];
      const DsdmNoise dn{t, noise.eps[b][k]};
      const double se = dsdm_loss(z0, prior, schedule, denoiser, dn);
      const double w = bound_weight(schedule, t);
      total += t == 1 ? -0.5 * w * se : count * w * se;
    }
  }
  return total;
}

double variational_bound_diagnostic(std::span<const PreparedPair *const> batch,
                                    const ParamSet &params, const ModelConfig &cfg,
                                    const NoiseSchedule &schedule, std::uint64_t seed) {
  Rng rng = make_rng(seed, 13);
  BoundNoise noise = BoundNoise::sample(rng, batch, cfg, bound_timesteps(schedule).size());
  return variational_bound_diagnostic(batch, params, cfg, schedule, noise);
}

namespace {

void write_block(std::ostream &out, const std::string &name, const Matrix &m) {
  out << "block " << name << " " << m.rows() << " " << m.cols() << "\n";
  std::vector<char> buf(static_cast<std::size_t>(m.size()) * 4);
  std::size_t at = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c)));
      for (int byte = 0; byte < 4; ++byte)
        buf[at++] = static_cast<char>((bits >> (8 * byte)) & 0xff);
    }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out << "\n";
}

Matrix read_block_payload(std::istream &in, Eigen::Index rows, Eigen::Index cols,
                          const std::string &name) {
  std::vector<char> buf(static_cast<std::size_t>(rows * cols) * 4);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!in) throw CheckpointError("truncated payload in block " + name);
  Matrix m(rows, cols);
  std::size_t at = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      std::uint32_t bits = 0;
      for (int byte = 0; byte < 4; ++byte)
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[at++])) << (8 * byte);
      m(r, c) = static_cast<double>(std::bit_cast<float>(bits));
    }
  if (in.get() != '\n') throw CheckpointError("corrupt block terminator after " + name);
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ck, int version) {
  std::ostringstream out(std::ios::binary);
  out << kMagic << "\n";
  out << "version=" << version << "\n";
  out << "step=" << ck.state.step << "\n";
  out << "adam_step=" << ck.state.adam.step << "\n";
  out << "config_digest=" << ck.config.digest() << "\n";
  for (const auto &[k, v]: ck.meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw CheckpointError("meta entry '" + k + "' cannot be stored");
    out << "meta." << k << "=" << v << "\n";
  }
  for (const auto &[k, v]: ck.config.entries()) out << "config." << k << "=" << v << "\n";
  const std::size_t blocks = ck.state.params.size() + ck.state.ema.size() +
                             ck.state.adam.m.size() + ck.state.adam.v.size();
  out << "blocks=" << blocks << "\n";
  out << "end_header\n";
  for (const auto &[k, v]: ck.state.params) write_block(out, "param/" + k, v);
  for (const auto &[k, v]: ck.state.ema) write_block(out, "ema/" + k, v);
  for (const auto &[k, v]: ck.state.adam.m) write_block(out, "adam_m/" + k, v);
  for (const auto &[k, v]: ck.state.adam.v) write_block(out, "adam_v/" + k, v);

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write " + tmp.string());
    const std::string data = out.str();
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!f) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw CheckpointError(path.string() + " is not a priorgen checkpoint");
  std::map<std::string, std::string> header;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end_header") {
      ended = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("malformed header line: " + line);
    header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto field = [&](const std::string &k) -> const std::string & {
    auto it = header.find(k);
    if (it == header.end()) throw CheckpointError("checkpoint header lacks " + k);
    return it->second;
  };
  const std::string &version = field("version");
  if (version != std::to_string(kCheckpointVersion))
    throw CheckpointError("unsupported checkpoint version " + version + " (this reader expects " +
                          std::to_string(kCheckpointVersion) + ")");
  if (!ended) throw CheckpointError("checkpoint header is not terminated");

  Checkpoint ck;
  try {
    for (const auto &[k, v]: header) {
      if (k.rfind("config.", 0) == 0) ck.config.set(k.substr(7), v);
      if (k.rfind("meta.", 0) == 0) ck.meta[k.substr(5)] = v;
    }
    ck.state.step = std::stol(field("step"));
    ck.state.adam.step = std::stol(field("adam_step"));
  } catch (const CheckpointError &) {
    throw;
  } catch (const std::exception &e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  if (ck.config.digest() != field("config_digest"))
    throw CheckpointError("checkpoint config digest mismatch");

  const long blocks = std::stol(field("blocks"));
  for (long b = 0; b < blocks; ++b) {
    if (!std::getline(in, line)) throw CheckpointError("checkpoint ends before all blocks");
    std::istringstream hs(line);
    std::string tag, name;
    Eigen::Index rows = -1, cols = -1;
    if (!(hs >> tag >> name >> rows >> cols) || tag != "block" || rows < 0 || cols < 0)
      throw CheckpointError("malformed block header: " + line);
    Matrix m = read_block_payload(in, rows, cols, name);
    const auto slash = name.find('/');
    const std::string group = name.substr(0, slash), key = name.substr(slash + 1);
    if (group == "param")
      ck.state.params[key] = std::move(m);
    else if (group == "ema")
      ck.state.ema[key] = std::move(m);
    else if (group == "adam_m")
      ck.state.adam.m[key] = std::move(m);
    else if (group == "adam_v")
      ck.state.adam.v[key] = std::move(m);
    else
      throw CheckpointError("unknown block group " + group);
  }
  ParamSet expected = init_model_params(ck.config.model, 0);
  for (const auto &[k, v]: expected) {
    for (const ParamSet *set: {&ck.state.params, &ck.state.ema, &ck.state.adam.m,
                               &ck.state.adam.v}) {
      auto it = set->find(k);
      if (it == set->end() || it->second.rows() != v.rows() || it->second.cols() != v.cols())
        throw CheckpointError("checkpoint tensor " + k + " is missing or misshapen");
    }
  }
  if (ck.state.params.size() != expected.size())
    throw CheckpointError("checkpoint holds tensors the configured model does not use");
  return ck;
}

std::string format_log_record(const LogRecord &r) {
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "step=%ld L_EAAE=%.6g L_DSDM=%.6g L=%.6g bound=%.6g grad_norm=%.4g wall=%.3f",
                r.step, r.loss.eaae, r.loss.dsdm, r.loss.total, r.bound, r.loss.grad_norm,
                r.wall_seconds);
  return buf;
}

void train(TrainState &state, const RunConfig &cfg, std::span<const PreparedPair> pairs,
           long until, const TrainHooks &hooks) {
  if (pairs.empty()) throw std::invalid_argument("no training pairs");
  const NoiseSchedule schedule = model_schedule(cfg.model);
  const auto start = std::chrono::steady_clock::now();
  std::vector<const PreparedPair *> probe;
  for (int i: batch_indices(pairs.size(), cfg.train.batch_size, 0, cfg.train.seed))
    probe.push_back(&pairs[i]);
  while (state.step < until) {
    const long step = state.step;
    std::vector<const PreparedPair *> batch;
    for (int i: batch_indices(pairs.size(), cfg.train.batch_size, step, cfg.train.seed))
      batch.push_back(&pairs[i]);
    Rng rng = step_rng(cfg.train.seed, step);
    const LossBreakdown loss = train_step(state, cfg.model, cfg.train, schedule, batch, rng);
    if (hooks.on_step) hooks.on_step(step, loss);
    const bool last = state.step == until;
    const bool log = cfg.train.log_every > 0 && (step % cfg.train.log_every == 0 || last);
    if (log && hooks.on_log) {
      LogRecord rec;
      rec.step = step;
      rec.loss = loss;
      rec.bound = std::numeric_limits<double>::quiet_NaN();
      if (cfg.train.bound_every > 0 && step % cfg.train.bound_every == 0)
        rec.bound = variational_bound_diagnostic(probe, state.params, cfg.model, schedule,
                                                 cfg.train.seed);
      rec.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      hooks.on_log(rec);
    }
    if (hooks.on_checkpoint && cfg.train.checkpoint_every > 0 &&
        state.step % cfg.train.checkpoint_every == 0)
      hooks.on_checkpoint(state);
  }
}

}  // namespace priorgen
