//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "priorgen/core.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

namespace priorgen {
namespace {
std::atomic<bool> g_cog_fault{false};

std::string join_row(std::string_view what, int row) {
  return std::string(what) + " (row " + std::to_string(row) + ")";
}
}  // namespace

namespace testing_hooks {
void set_cog_fault(bool enabled) { g_cog_fault.store(enabled); }
bool cog_fault() { return g_cog_fault.load(); }
}  // namespace testing_hooks

void FeatureScaler::validate() const {
  if (!(coord_weight > 0) || !(onehot_weight > 0) || !(charge_weight > 0))
    throw std::invalid_argument("feature scaler weights must be positive");
}

MolecularPointCloud MolecularPointCloud::from_atoms(
    std::span<const std::string> elements, const Matrix &coords,
    std::span<const int> charges, std::vector<std::string> alphabet,
    bool has_charge) {
  const auto n = static_cast<Eigen::Index>(elements.size());
  if (coords.rows() != n || coords.cols() != 3)
    throw std::invalid_argument("coordinate matrix must be N x 3");
  if (!charges.empty() && static_cast<Eigen::Index>(charges.size()) != n)
    throw std::invalid_argument("charge count does not match atom count");

  MolecularPointCloud mol;
  mol.alphabet = std::move(alphabet);
  mol.has_charge = has_charge;
  mol.coords = coords;
  mol.features = Matrix::Zero(n, mol.layout().width());
  for (Eigen::Index i = 0; i < n; ++i) {
    auto it = std::find(mol.alphabet.begin(), mol.alphabet.end(), elements[i]);
    if (it == mol.alphabet.end())
      throw std::invalid_argument("element '" + elements[i] +
                                  "' is not in the alphabet");
    mol.features(i, it - mol.alphabet.begin()) = 1.0;
    if (has_charge && !charges.empty())
      mol.features(i, mol.layout().num_types) = charges[i];
  }
  return mol;
}

int MolecularPointCloud::type_index(int atom) const {
  Eigen::Index idx = 0;
  features.row(atom).head(layout().num_types).maxCoeff(&idx);
  return static_cast<int>(idx);
}

const std::string &MolecularPointCloud::element(int atom) const {
  return alphabet[type_index(atom)];
}

int MolecularPointCloud::charge(int atom) const {
  if (!has_charge) return 0;
  double q = features(atom, layout().num_types);
  if (scaling) q /= scaling->charge_weight;
  return static_cast<int>(std::lround(q));
}

std::vector<std::string> MolecularPointCloud::elements() const {
  std::vector<std::string> out;
  out.reserve(atom_count());
  for (int i = 0; i < atom_count(); ++i) out.push_back(element(i));
  return out;
}

std::vector<int> MolecularPointCloud::charges() const {
  std::vector<int> out;
  out.reserve(atom_count());
  for (int i = 0; i < atom_count(); ++i) out.push_back(charge(i));
  return out;
}

MolecularPointCloud MolecularPointCloud::select(
    std::span<const int> rows) const {
  MolecularPointCloud out = *this;
  out.coords.resize(static_cast<Eigen::Index>(rows.size()), 3);
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= atom_count())
      throw std::out_of_range("atom index out of range");
    out.coords.row(static_cast<Eigen::Index>(r)) = coords.row(rows[r]);
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(rows[r]);
  }
  return out;
}

void MolecularPointCloud::validate() const {
  const auto n = coords.rows();
  if (n < 1) throw std::invalid_argument("molecule has no atoms");
  if (coords.cols() != 3)
    throw std::invalid_argument("coordinate matrix must have 3 columns");
  if (features.rows() != n)
    throw std::invalid_argument("feature rows do not match atom count");
  if (features.cols() != layout().width())
    throw std::invalid_argument("feature width does not match layout");
  if (!coords.allFinite())
    throw std::invalid_argument("coordinates contain non-finite values");
  const double level = scaling ? scaling->onehot_weight : 1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto block = features.row(i).head(layout().num_types);
    int ones = 0;
    for (Eigen::Index j = 0; j < block.size(); ++j) {
      if (block(j) == level)
        ++ones;
      else if (block(j) != 0.0)
        throw std::invalid_argument(
            join_row("one-hot block has a non-binary entry", static_cast<int>(i)));
    }
    if (ones != 1)
      throw std::invalid_argument(
          join_row("one-hot block must have exactly one hot entry",
                   static_cast<int>(i)));
  }
}

std::string_view to_string(SubstructureKind kind) {
  switch (kind) {
  case SubstructureKind::scaffold:
    return "scaffold";
  case SubstructureKind::ring_system:
    return "ring_system";
  case SubstructureKind::fragment:
    return "fragment";
  }
  return "fragment";
}

SubstructureKind parse_substructure_kind(std::string_view text) {
  if (text == "scaffold") return SubstructureKind::scaffold;
  if (text == "ring_system" || text == "ring") return SubstructureKind::ring_system;
  if (text == "fragment") return SubstructureKind::fragment;
  throw std::invalid_argument("unknown substructure kind '" +
                              std::string(text) + "'");
}

std::vector<int> substructure_first_order(int atom_count,
                                          std::span<const int> index_map) {
  std::vector<char> used(atom_count, 0);
  std::vector<int> order;
  order.reserve(atom_count);
  for (int r: index_map) {
    if (r < 0 || r >= atom_count || used[r])
      throw std::invalid_argument("substructure index map does not match the molecule");
    used[r] = 1;
    order.push_back(r);
  }
  for (int i = 0; i < atom_count; ++i)
    if (!used[i]) order.push_back(i);
  return order;
}

Matrix center_of_gravity_project(const Matrix &coords) {
  if (coords.rows() == 0) throw std::invalid_argument("empty point set");
  if (g_cog_fault.load()) return coords;
  Eigen::RowVectorXd mean = coords.colwise().mean();
  return coords.rowwise() - mean;
}

double max_abs_column_mean(const Matrix &coords) {
  if (coords.rows() == 0) return 0.0;
  return coords.colwise().mean().cwiseAbs().maxCoeff();
}

MolecularPointCloud scale_features(const MolecularPointCloud &mol,
                                   const FeatureScaler &scaler) {
  scaler.validate();
  if (mol.scaling) throw std::invalid_argument("molecule is already scaled");
  if (mol.features.cols() != mol.layout().width())
    throw std::invalid_argument("feature layout does not match the scaler's "
                                "modality partition");
  MolecularPointCloud out = mol;
  const int nt = mol.layout().num_types;
  out.coords *= scaler.coord_weight;
  out.features.leftCols(nt) *= scaler.onehot_weight;
  if (mol.has_charge) out.features.col(nt) *= scaler.charge_weight;
  out.scaling = scaler;
  return out;
}

MolecularPointCloud unscale_features(const MolecularPointCloud &mol) {
  if (!mol.scaling) throw std::invalid_argument("molecule is not scaled");
  const FeatureScaler &s = *mol.scaling;
  MolecularPointCloud out = mol;
  const int nt = mol.layout().num_types;
  out.coords /= s.coord_weight;
  out.features.leftCols(nt) /= s.onehot_weight;
  if (mol.has_charge) out.features.col(nt) /= s.charge_weight;
  out.scaling.reset();
  return out;
}

bool is_rotation(const Eigen::Matrix3d &rotation, double tol) {
  if (!rotation.allFinite()) return false;
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol)
    return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

Matrix transform_coords(const Matrix &coords, const Eigen::Matrix3d &rotation,
                        const Eigen::Vector3d &translation) {
  if (!is_rotation(rotation)) throw std::invalid_argument("invalid rotation");
  Matrix out = coords * rotation.transpose();
  out.rowwise() += translation.transpose();
  return out;
}

MolecularPointCloud apply_rigid_transform(const MolecularPointCloud &mol,
                                          const Eigen::Matrix3d &rotation,
                                          const Eigen::Vector3d &translation) {
  MolecularPointCloud out = mol;
  out.coords = transform_coords(mol.coords, rotation, translation);
  return out;
}

double aligned_rmsd(const Matrix &a, const Matrix &b) {
  if (a.rows() != b.rows() || a.cols() != 3 || b.cols() != 3 || a.rows() == 0)
    throw std::invalid_argument("aligned_rmsd needs two non-empty N x 3 sets");
  const Matrix pa = a.rowwise() - a.colwise().mean();
  const Matrix pb = b.rowwise() - b.colwise().mean();
  const Eigen::Matrix3d cov = pa.transpose() * pb;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) d(2, 2) = -1;
  const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();
  const Matrix diff = pa * r.transpose() - pb;
  return std::sqrt(diff.squaredNorm() / static_cast<double>(a.rows()));
}

Eigen::Matrix3d random_rotation(Rng &rng) {
  std::normal_distribution<double> normal;
  Eigen::Matrix3d g;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::Matrix3d> qr(g);
  Eigen::Matrix3d q = qr.householderQ();
  const Eigen::Matrix3d r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < 3; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  if (q.determinant() < 0) q.col(0) *= -1.0;
  return q;
}

Matrix standard_normal(Rng &rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal;
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = normal(rng);
  return out;
}

Matrix projected_normal(Rng &rng, Eigen::Index rows) {
  Matrix eps = standard_normal(rng, rows, 3);
  if (rows == 0) return eps;
  return center_of_gravity_project(eps);
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

}  // namespace priorgen
