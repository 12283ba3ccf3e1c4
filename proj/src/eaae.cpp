//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "priorgen/eaae.h"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace priorgen {
namespace {
double kl_per_dim(double sigma) {
  const double s2 = sigma * sigma;
  return s2 - 1.0 - std::log(s2);
}

struct EncodedVars {
  Var mu_x, mu_h, f_x, f_h;
  std::vector<int> offsets;
};

EncodedVars encode_vars(const ParamBinding &p, const EaaeConfig &cfg,
                        const Matrix &sub_x, const Matrix &sub_h,
                        const std::vector<int> &sizes, const Matrix &noise_x,
                        const Matrix &noise_h, Tape &tape) {
  GraphBatch g = GraphBatch::fully_connected(sizes);
  EgnnOutput out = egnn_forward(p, kEncoderPrefix, cfg.encoder,
                                tape.constant(sub_x), tape.constant(sub_h), g);
  EncodedVars e;
  e.offsets = g.offsets;
  e.mu_x = segment_center(out.coords, g.offsets);
  e.mu_h = out.features;
  e.f_x = add(e.mu_x, scale(tape.constant(noise_x), cfg.sigma0));
  e.f_h = add(e.mu_h, scale(tape.constant(noise_h), cfg.sigma0));
  return e;
}

struct DecodedVars {
  Var coords, logits, charge;
};

/// `prior_offsets` segments f_x/f_h per molecule; `decoded` gives each
/// molecule's node count; `virt` stacks the virtual-node draws.
DecodedVars decode_vars(const ParamBinding &p, const EaaeConfig &cfg,
                        const FeatureLayout &layout, Var f_x, Var f_h,
                        const std::vector<int> &prior_offsets,
                        const std::vector<int> &decoded, const Matrix &virt,
                        Tape &tape) {
  const int segments = static_cast<int>(decoded.size());
  const int prior_rows = prior_offsets.back();
  const int k = static_cast<int>(f_h.cols());
  std::vector<int> order;
  int virt_row = 0;
  for (int s = 0; s < segments; ++s) {
    const int n_sub = prior_offsets[s + 1] - prior_offsets[s];
    if (decoded[s] < n_sub) throw std::invalid_argument("target smaller than prior");
    for (int r = 0; r < n_sub; ++r) order.push_back(prior_offsets[s] + r);
    for (int r = n_sub; r < decoded[s]; ++r) order.push_back(prior_rows + virt_row++);
  }
  if (virt_row != virt.rows())
    throw std::invalid_argument("virtual-node noise has the wrong number of rows");

  Var x_src = f_x, h_src = concat_cols(std::vector<Var>{
                       f_h, tape.constant(Matrix::Ones(prior_rows, 1))});
  if (virt_row > 0) {
    x_src = concat_rows(std::vector<Var>{f_x, tape.constant(virt * cfg.virtual_spread)});
    h_src = concat_rows(std::vector<Var>{h_src, tape.constant(Matrix::Zero(virt_row, k + 1))});
  }
  GraphBatch g = GraphBatch::fully_connected(decoded);
  Var x_in = segment_center(gather_rows(x_src, order), g.offsets);
  Var h_in = gather_rows(h_src, order);
  EgnnOutput out = egnn_forward(p, kDecoderPrefix, cfg.decoder, x_in, h_in, g);
  DecodedVars d;
  d.coords = segment_center(out.coords, g.offsets);
  d.logits = slice_cols(out.features, 0, layout.num_types);
  if (layout.has_charge) d.charge = slice_cols(out.features, layout.num_types, 1);
  return d;
}
}  // namespace

void EaaeConfig::validate() const {
  encoder.validate();
  decoder.validate();
  if (latent_feat_dim < 1) throw std::invalid_argument("latent_feat_dim must be >= 1");
  if (!(sigma0 > 0)) throw std::invalid_argument("sigma0 must be positive");
  if (!(virtual_spread > 0)) throw std::invalid_argument("virtual_spread must be positive");
}

void init_eaae_params(ParamSet &params, const EaaeConfig &cfg,
                      const FeatureLayout &layout, Rng &rng) {
  cfg.validate();
  init_egnn_params(params, kEncoderPrefix, cfg.encoder, layout.width(),
                   cfg.latent_feat_dim, rng);
  init_egnn_params(params, kDecoderPrefix, cfg.decoder, cfg.latent_feat_dim + 1,
                   layout.width(), rng);
}

PreparedPair prepare_pair(const TrainingPair &pair, const FeatureScaler &scaler) {
  const MolecularPointCloud &mol = pair.mol;
  mol.validate();
  std::vector<int> order(mol.atom_count());
  std::iota(order.begin(), order.end(), 0);
  if (pair.sub) {
    if (static_cast<int>(pair.index_map.size()) != pair.sub->atom_count())
      throw std::invalid_argument("substructure index map length mismatch");
    if (pair.sub->atom_count() > mol.atom_count())
      throw std::invalid_argument("substructure larger than molecule");
    order = substructure_first_order(mol.atom_count(), pair.index_map);
    for (int r = 0; r < pair.sub->atom_count(); ++r)
      if (pair.sub->cloud.type_index(r) != mol.type_index(pair.index_map[r]))
        throw std::invalid_argument("substructure atom " + std::to_string(r) +
                                    " does not match its parent atom");
  }
  MolecularPointCloud scaled = scale_features(mol.select(order), scaler);
  PreparedPair out;
  out.id = pair.id;
  out.x = center_of_gravity_project(scaled.coords);
  out.h = scaled.features;
  out.types.resize(mol.atom_count());
  for (int i = 0; i < mol.atom_count(); ++i) out.types[i] = scaled.type_index(i);
  if (pair.sub) {
    MolecularPointCloud sub = scale_features(pair.sub->cloud, scaler);
    out.n_sub = sub.atom_count();
    out.sub_x = center_of_gravity_project(sub.coords);
    out.sub_h = sub.features;
  } else {
    out.sub_x = Matrix(0, 3);
    out.sub_h = Matrix(0, out.h.cols());
  }
  return out;
}

PreparedPair rotate_pair(const PreparedPair &pair, const Eigen::Matrix3d &rotation) {
  PreparedPair out = pair;
  out.x = pair.x * rotation.transpose();
  out.sub_x = pair.sub_x * rotation.transpose();
  return out;
}

EaaeNoise EaaeNoise::sample(Rng &rng, int n_sub, int n_decoded, int latent_dim) {
  EaaeNoise n;
  n.enc_x = n_sub > 0 ? projected_normal(rng, n_sub) : Matrix(0, 3);
  n.enc_h = standard_normal(rng, n_sub, latent_dim);
  n.virt_x = standard_normal(rng, std::max(n_decoded - n_sub, 0), 3);
  return n;
}

EaaeNoise EaaeNoise::rotated(const Eigen::Matrix3d &rotation) const {
  EaaeNoise n = *this;
  n.enc_x = enc_x * rotation.transpose();
  n.virt_x = virt_x * rotation.transpose();
  return n;
}

double gaussian_kl(double mu_sq_sum, double dims, double sigma) {
  return 0.5 * (mu_sq_sum + dims * kl_per_dim(sigma));
}

EncodeResult encode(const Matrix &sub_x, const Matrix &sub_h,
                    const EaaeConfig &cfg, const ParamSet &params,
                    const std::optional<EaaeNoise> &noise) {
  const int n = static_cast<int>(sub_x.rows());
  if (n == 0) throw std::invalid_argument("cannot encode an empty substructure");
  if (sub_h.rows() != n) throw std::invalid_argument("substructure row mismatch");
  const int k = cfg.latent_feat_dim;
  Tape tape(false);
  ParamBinding p(tape, params);
  Matrix nx = noise ? noise->enc_x : Matrix::Zero(n, 3);
  Matrix nh = noise ? noise->enc_h : Matrix::Zero(n, k);
  if (nx.rows() != n || nh.rows() != n || nh.cols() != k)
    throw std::invalid_argument("encoder noise shape mismatch");
  EncodedVars e = encode_vars(p, cfg, center_of_gravity_project(sub_x), sub_h,
                              {n}, nx, nh, tape);
  return {{e.mu_x.value(), e.mu_h.value()}, {e.f_x.value(), e.f_h.value()}};
}

DecodeResult decode(const LatentPrior &prior, int target_atoms,
                    const EaaeConfig &cfg, const FeatureLayout &layout,
                    const ParamSet &params, const Matrix &virt_x) {
  const int n_sub = prior.size();
  if (n_sub == 0) throw std::invalid_argument("cannot decode an empty prior");
  if (target_atoms < n_sub) throw std::invalid_argument("target smaller than prior");
  Tape tape(false);
  ParamBinding p(tape, params);
  DecodedVars d = decode_vars(p, cfg, layout, tape.constant(prior.f_x),
                              tape.constant(prior.f_h), {0, n_sub},
                              {target_atoms}, virt_x, tape);
  DecodeResult r;
  r.coords = d.coords.value();
  r.logits = d.logits.value();
  if (layout.has_charge) r.charge = d.charge.value();
  return r;
}

int decoded_atom_count(const PreparedPair &pair, const EaaeConfig &cfg) {
  return cfg.asymmetric ? pair.atom_count() : pair.n_sub;
}

Var EaaeBatch::total() const {
  return add(add(coord, type), add(charge, kl));
}

EaaeBatch eaae_forward(const ParamBinding &p, const EaaeConfig &cfg,
                       const FeatureLayout &layout,
                       std::span<const PreparedPair *const> pairs,
                       std::span<const EaaeNoise> noise) {
  if (pairs.size() != noise.size())
    throw std::invalid_argument("one noise record per pair is required");
  Tape &tape = p.tape();
  const int k = cfg.latent_feat_dim;
  const int d = layout.width();

  std::vector<int> sizes, decoded;
  int sub_rows = 0, virt_rows = 0, target_rows = 0;
  double kl_const = 0;
  for (std::size_t b = 0; b < pairs.size(); ++b) {
    const PreparedPair &pr = *pairs[b];
    if (pr.h.cols() != d) throw std::invalid_argument("feature layout mismatch");
    if (pr.n_sub == 0) continue;
    const int nd = decoded_atom_count(pr, cfg);
    sizes.push_back(pr.n_sub);
    decoded.push_back(nd);
    sub_rows += pr.n_sub;
    virt_rows += nd - pr.n_sub;
    target_rows += nd;
    kl_const += 0.5 * (3.0 * pr.n_sub - 3.0 + pr.n_sub * k) * kl_per_dim(cfg.sigma0);
    if (noise[b].enc_x.rows() != pr.n_sub || noise[b].enc_h.rows() != pr.n_sub ||
        noise[b].virt_x.rows() != nd - pr.n_sub)
      throw std::invalid_argument("noise shape does not match pair");
  }

  EaaeBatch out;
  if (sizes.empty()) {
    Var zero = tape.constant(Matrix::Zero(1, 1));
    out.coord = out.type = out.charge = out.kl = zero;
    out.prior_offsets.assign(pairs.size() + 1, 0);
    return out;
  }

  Matrix sx(sub_rows, 3), sh(sub_rows, d), nx(sub_rows, 3), nh(sub_rows, k);
  Matrix virt(virt_rows, 3), tx(target_rows, 3), onehot = Matrix::Zero(target_rows, layout.num_types);
  Matrix tq(target_rows, 1);
  int rs = 0, rv = 0, rt = 0;
  for (std::size_t b = 0; b < pairs.size(); ++b) {
    const PreparedPair &pr = *pairs[b];
    if (pr.n_sub == 0) continue;
    const int nd = decoded_atom_count(pr, cfg);
    sx.middleRows(rs, pr.n_sub) = pr.sub_x;
    sh.middleRows(rs, pr.n_sub) = pr.sub_h;
    nx.middleRows(rs, pr.n_sub) = noise[b].enc_x;
    nh.middleRows(rs, pr.n_sub) = noise[b].enc_h;
    virt.middleRows(rv, nd - pr.n_sub) = noise[b].virt_x;
    tx.middleRows(rt, nd) = cfg.asymmetric ? pr.x : pr.sub_x;
    for (int i = 0; i < nd; ++i) onehot(rt + i, pr.types[i]) = 1.0;
    if (layout.has_charge) tq.middleRows(rt, nd) = pr.h.col(layout.num_types).head(nd);
    rs += pr.n_sub;
    rv += nd - pr.n_sub;
    rt += nd;
  }

  EncodedVars e = encode_vars(p, cfg, sx, sh, sizes, nx, nh, tape);
  DecodedVars dec = decode_vars(p, cfg, layout, e.f_x, e.f_h, e.offsets, decoded,
                                virt, tape);

  out.coord = sum(square(sub(dec.coords, tape.constant(tx))));
  out.type = neg(sum(cmul(log_softmax_rows(dec.logits), tape.constant(onehot))));
  out.charge = layout.has_charge ? sum(square(sub(dec.charge, tape.constant(tq))))
                                 : tape.constant(Matrix::Zero(1, 1));
  out.kl = add_const(scale(add(sum(square(e.mu_x)), sum(square(e.mu_h))), 0.5), kl_const);
  out.f_x = e.f_x;
  out.f_h = e.f_h;
  out.has_prior = true;
  out.prior_offsets.push_back(0);
  for (std::size_t b = 0; b < pairs.size(); ++b)
    out.prior_offsets.push_back(out.prior_offsets.back() + pairs[b]->n_sub);
  return out;
}

EaaeTerms eaae_loss(const PreparedPair &pair, const EaaeConfig &cfg,
                    const FeatureLayout &layout, const ParamSet &params,
                    const EaaeNoise &noise) {
  Tape tape(false);
  ParamBinding p(tape, params);
  const PreparedPair *ptr = &pair;
  EaaeBatch b = eaae_forward(p, cfg, layout, std::span(&ptr, 1), std::span(&noise, 1));
  return {b.coord.scalar(), b.type.scalar(), b.charge.scalar(), b.kl.scalar()};
}

EaaeTerms eaae_loss(const PreparedPair &pair, const EaaeConfig &cfg,
                    const FeatureLayout &layout, const ParamSet &params,
                    std::uint64_t seed) {
  Rng rng = make_rng(seed, 1);
  EaaeNoise noise = EaaeNoise::sample(rng, pair.n_sub, decoded_atom_count(pair, cfg),
                                      cfg.latent_feat_dim);
  return eaae_loss(pair, cfg, layout, params, noise);
}

}  // namespace priorgen
