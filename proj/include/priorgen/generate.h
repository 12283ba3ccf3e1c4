//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef PRIORGEN_GENERATE_H_
#define PRIORGEN_GENERATE_H_

#include <cstdint>
#include <map>
#include <string>

#include "priorgen/config.h"
#include "priorgen/core.h"
#include "priorgen/diffusion.h"

namespace priorgen {

/// Structural prior of an unscaled substructure in any frame, drawn with the
/// reparameterization noise of `rng`.
LatentPrior encode_substructure(const MolecularPointCloud &sub, const ModelConfig &cfg,
                                const ParamSet &params, Rng &rng);

/// Prior with no rows; the denoiser then sees all-zero condition columns.
LatentPrior zero_prior(const ModelConfig &cfg);

/// N = N' + delta with delta drawn from a histogram of (N - N') counts.
int draw_atom_count(const std::map<int, int> &delta_histogram, int n_sub, Rng &rng);

std::string format_histogram(const std::map<int, int> &histogram);
std::map<int, int> parse_histogram(const std::string &text);

/// One reverse-diffusion sample with the network denoiser.
MolecularPointCloud generate_molecule(const ModelConfig &cfg, const ParamSet &params,
                                      const LatentPrior &prior, int atoms, std::uint64_t seed);

}  // namespace priorgen

#endif  // PRIORGEN_GENERATE_H_
