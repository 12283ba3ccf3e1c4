//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "priorgen/generate.h"

#include <sstream>
#include <stdexcept>

#include "priorgen/eaae.h"

namespace priorgen {

LatentPrior encode_substructure(const MolecularPointCloud &sub, const ModelConfig &cfg,
                                const ParamSet &params, Rng &rng) {
  if (sub.atom_count() == 0) return zero_prior(cfg);
  if (sub.alphabet != cfg.alphabet || sub.has_charge != cfg.has_charge)
    throw std::invalid_argument("substructure alphabet does not match the model");
  MolecularPointCloud scaled = scale_features(sub, cfg.scaler);
  EaaeNoise noise = EaaeNoise::sample(rng, sub.atom_count(), sub.atom_count(),
                                      cfg.eaae.latent_feat_dim);
  return encode(center_of_gravity_project(scaled.coords), scaled.features, cfg.eaae, params,
                noise)
      .prior;
}

LatentPrior zero_prior(const ModelConfig &cfg) {
  return {Matrix(0, 3), Matrix(0, cfg.eaae.latent_feat_dim)};
}

int draw_atom_count(const std::map<int, int> &histogram, int n_sub, Rng &rng) {
  std::vector<int> values;
  std::vector<double> weights;
  for (auto [delta, count]: histogram)
    if (count > 0 && delta >= 0) {
      values.push_back(delta);
      weights.push_back(count);
    }
  if (values.empty()) throw std::invalid_argument("empty atom-count histogram");
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  return n_sub + values[pick(rng)];
}

std::string format_histogram(const std::map<int, int> &histogram) {
  std::string s;
  for (auto [k, v]: histogram)
    s += (s.empty() ? "" : ",") + std::to_string(k) + ":" + std::to_string(v);
  return s;
}

std::map<int, int> parse_histogram(const std::string &text) {
  std::map<int, int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("bad histogram entry " + item);
    out[std::stoi(item.substr(0, colon))] += std::stoi(item.substr(colon + 1));
  }
  return out;
}

MolecularPointCloud generate_molecule(const ModelConfig &cfg, const ParamSet &params,
                                      const LatentPrior &prior, int atoms, std::uint64_t seed) {
  return sample(prior, atoms, make_schedule(cfg.diffusion_steps, cfg.schedule),
                network_denoiser(cfg.denoiser, params), cfg.decode_spec(), seed);
}

}  // namespace priorgen
