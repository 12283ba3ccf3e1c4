//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef PRIORGEN_CORE_H_
#define PRIORGEN_CORE_H_

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace priorgen {

using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

inline const std::vector<std::string> &default_alphabet() {
  static const std::vector<std::string> kAlphabet = {"H", "C", "N", "O", "F"};
  return kAlphabet;
}

/// Per-modality weights applied to coordinates, the one-hot type block and
/// the charge column before diffusion.
struct FeatureScaler {
  double coord_weight = 1.0;
  double onehot_weight = 0.25;
  double charge_weight = 0.1;

  void validate() const;
};

/// Layout of the per-atom feature row: a one-hot block over the element
/// alphabet, optionally followed by one integer charge column.
struct FeatureLayout {
  int num_types = 5;
  bool has_charge = true;

  int width() const { return num_types + (has_charge ? 1 : 0); }
  bool operator==(const FeatureLayout &) const = default;
};

/// A molecule as a point cloud: coordinates (N x 3, Angstrom) plus a feature
/// matrix (N x d).  When `scaling` is set the feature and coordinate blocks
/// have been multiplied by the scaler weights.
struct MolecularPointCloud {
  Matrix coords;
  Matrix features;
  std::vector<std::string> alphabet = default_alphabet();
  bool has_charge = true;
  std::optional<FeatureScaler> scaling;

  static MolecularPointCloud from_atoms(std::span<const std::string> elements,
                                        const Matrix &coords,
                                        std::span<const int> charges,
                                        std::vector<std::string> alphabet =
                                            default_alphabet(),
                                        bool has_charge = true);

  int atom_count() const { return static_cast<int>(coords.rows()); }
  FeatureLayout layout() const {
    return {static_cast<int>(alphabet.size()), has_charge};
  }

  int type_index(int atom) const;
  const std::string &element(int atom) const;
  int charge(int atom) const;
  std::vector<std::string> elements() const;
  std::vector<int> charges() const;

  MolecularPointCloud select(std::span<const int> rows) const;

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

enum class SubstructureKind { scaffold, ring_system, fragment };

std::string_view to_string(SubstructureKind kind);
SubstructureKind parse_substructure_kind(std::string_view text);

struct Substructure {
  MolecularPointCloud cloud;
  SubstructureKind kind = SubstructureKind::fragment;

  int atom_count() const { return cloud.atom_count(); }
};

/// A molecule with the substructure used to condition on it.  `index_map`
/// maps substructure rows to parent rows; `sub` is empty for molecules that
/// have no substructure of the requested kind.
struct TrainingPair {
  MolecularPointCloud mol;
  std::optional<Substructure> sub;
  std::vector<int> index_map;
  int id = -1;
};

/// Parent row order with the substructure rows first (in index-map order)
/// followed by the remaining rows in dataset order.
std::vector<int> substructure_first_order(int atom_count,
                                          std::span<const int> index_map);

/// Equivariant coordinate latent plus invariant feature latent.
struct LatentPrior {
  Matrix f_x;  // N' x 3
  Matrix f_h;  // N' x k

  int size() const { return static_cast<int>(f_x.rows()); }
  int latent_dim() const { return static_cast<int>(f_h.cols()); }
};

Matrix center_of_gravity_project(const Matrix &coords);

/// Largest absolute column mean of an N x 3 matrix.
double max_abs_column_mean(const Matrix &coords);

MolecularPointCloud scale_features(const MolecularPointCloud &mol,
                                   const FeatureScaler &scaler);
MolecularPointCloud unscale_features(const MolecularPointCloud &mol);

/// coords' = coords * R^T + t for each row.
Matrix transform_coords(const Matrix &coords, const Eigen::Matrix3d &rotation,
                        const Eigen::Vector3d &translation);

MolecularPointCloud apply_rigid_transform(const MolecularPointCloud &mol,
                                          const Eigen::Matrix3d &rotation,
                                          const Eigen::Vector3d &translation);

bool is_rotation(const Eigen::Matrix3d &rotation, double tol = 1e-8);

/// RMSD between two N x 3 point sets after optimal rigid superposition
/// (Kabsch, proper rotations only).
double aligned_rmsd(const Matrix &a, const Matrix &b);

/// Haar-ish SO(3) sample: QR of a Gaussian matrix with the sign fix.
Eigen::Matrix3d random_rotation(Rng &rng);

Matrix standard_normal(Rng &rng, Eigen::Index rows, Eigen::Index cols);

/// Gaussian N x 3 noise projected onto the zero center-of-gravity subspace.
Matrix projected_normal(Rng &rng, Eigen::Index rows);

/// Rng seeded from a (seed, stream) pair; used to derive independent streams.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

namespace testing_hooks {
// Makes every center-of-gravity projection a no-op.  Used by the verify
// command to check that the suites notice a broken projection.
void set_cog_fault(bool enabled);
bool cog_fault();
}  // namespace testing_hooks

}  // namespace priorgen

#endif  // PRIORGEN_CORE_H_
