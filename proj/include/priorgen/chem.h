//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef PRIORGEN_CHEM_H_
#define PRIORGEN_CHEM_H_

#include <compare>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "priorgen/core.h"

namespace priorgen {

struct Bond {
  int i = 0;
  int j = 0;
  int order = 1;

  auto operator<=>(const Bond &) const = default;
};

/// Molecular graph: labelled atoms plus bonds with i < j, sorted, no
/// duplicates, orders in {1, 2, 3}.
struct BondGraph {
  std::vector<std::string> elements;
  std::vector<int> charges;
  std::vector<Bond> bonds;

  /// Normalizes endpoint order and sorts; throws on invalid input.
  static BondGraph from_bonds(std::vector<std::string> elements, std::vector<int> charges,
                              std::vector<Bond> bonds);

  int atom_count() const { return static_cast<int>(elements.size()); }
  int bond_count() const { return static_cast<int>(bonds.size()); }

  /// Per-atom list of (neighbor, order).
  std::vector<std::vector<std::pair<int, int>>> adjacency() const;
  std::vector<int> bond_order_sums() const;
  std::vector<int> degrees() const;
  /// Bond order between two atoms, 0 when unbonded.
  int order_between(int a, int b) const;
  /// Induced subgraph over `atoms`, relabelled in the given order.
  BondGraph induced(std::span<const int> atoms) const;

  void validate() const;
  bool operator==(const BondGraph &) const = default;
};

/// Distance bands (Angstrom) per element pair and bond order.
class BondTable {
 public:
  struct Band {
    int order;
    double min;
    double max;
  };

  static BondTable parse(std::istream &in);
  static BondTable load(const std::string &path);
  static const BondTable &builtin();

  bool knows(const std::string &a, const std::string &b) const;
  /// Bond order for a distance, 0 when outside every band or the pair is unknown.
  int order(const std::string &a, const std::string &b, double distance) const;

 private:
  std::map<std::pair<std::string, std::string>, std::vector<Band>> bands_;
};

/// Allowed bond-order sums per (element, formal charge).
class ValenceTable {
 public:
  static ValenceTable parse(std::istream &in);
  static ValenceTable load(const std::string &path);
  static const ValenceTable &builtin();

  /// Empty when the element/charge combination is unknown.
  const std::vector<int> &allowed(const std::string &element, int charge) const;
  std::optional<int> max_valence(const std::string &element, int charge) const;

 private:
  std::map<std::pair<std::string, int>, std::vector<int>> allowed_;
};

/// Bonds every pair whose distance falls in a band; unknown element pairs
/// stay unbonded and are reported on std::clog.
BondGraph infer_bonds(const MolecularPointCloud &mol,
                      const BondTable &table = BondTable::builtin());

/// Graph without bonds carrying the molecule's labels.
BondGraph atoms_only(const MolecularPointCloud &mol);

struct AtomStability {
  std::vector<bool> stable;
  int stable_count = 0;

  double fraction() const {
    return stable.empty() ? 0.0 : static_cast<double>(stable_count) / stable.size();
  }
};

AtomStability atom_stability(const BondGraph &bg,
                             const ValenceTable &valences = ValenceTable::builtin());
/// Throws std::invalid_argument("empty") for a graph without atoms.
bool molecule_stability(const BondGraph &bg,
                        const ValenceTable &valences = ValenceTable::builtin());

/// Connected, and every atom has 1 <= bond-order sum <= max allowed valence.
bool is_valid(const BondGraph &bg, const ValenceTable &valences = ValenceTable::builtin());

int connected_components(const BondGraph &bg);
/// Circuit rank |E| - |V| + components.
int ring_count(const BondGraph &bg);
/// Atoms lying on at least one cycle.
std::vector<bool> ring_atoms(const BondGraph &bg);

/// Atoms surviving iterative removal of degree <= 1 atoms, ascending.
std::vector<int> murcko_scaffold_atoms(const BondGraph &bg);
/// Empty optional is the "-" marker of an acyclic molecule.
std::optional<BondGraph> murcko_scaffold(const BondGraph &bg);

/// Lower-case hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Hex SHA-256 over a canonical form of the labelled graph.
using Digest = std::string;

Digest canonical_hash(const BondGraph &bg);
Digest canonical_hash(const std::optional<BondGraph> &scaffold);
const Digest &empty_scaffold_digest();
/// Canonical atom order behind canonical_hash: order[k] is the atom placed at k.
std::vector<int> canonical_order(const BondGraph &bg);

inline constexpr int kMaxSubstructureAtoms = 12;

/// Label-preserving (element and bond order) subgraph embedding of `target`.
/// With `induced`, non-bonded target pairs must also be non-bonded in `bg`.
bool contains_substructure(const BondGraph &bg, const BondGraph &target,
                           bool induced = false);

enum class TargetMode { ring, scaffold, fragment };

std::string_view to_string(TargetMode mode);
TargetMode parse_target_mode(std::string_view text);

struct MetricTargets {
  std::set<int> ring_counts;
  /// Target scaffolds (scaffold mode) or fragments (fragment mode).
  std::vector<BondGraph> substructures;
};

struct MetricReport {
  int generated = 0;
  int valid = 0;
  int desired = 0;
  int valid_desired = 0;
  int atoms_desired = 0;
  int stable_atoms_desired = 0;
  int stable_desired = 0;
  int novel_valid_desired = 0;
  int success = 0;
  int target_scaffolds = 0;
  int covered_scaffolds = 0;

  double P = 0, C = 0, AS = 0, MS = 0, V = 0, N = 0, S = 0;
  bool coverage_defined = false;

  bool operator==(const MetricReport &) const = default;
};

/// Per-molecule flags used by compute_metrics.
struct MoleculeEvaluation {
  bool valid = false;
  bool unique = false;
  bool novel = false;
  bool desired = false;
  bool stable = false;
  int atoms = 0;
  int stable_atoms = 0;
  Digest hash;
  Digest scaffold_hash;
};

std::vector<MoleculeEvaluation> evaluate_molecules(std::span<const BondGraph> generated,
                                                   const std::set<Digest> &training_hashes,
                                                   const MetricTargets &targets,
                                                   TargetMode mode);

MetricReport compute_metrics(std::span<const BondGraph> generated,
                             const std::set<Digest> &training_hashes,
                             const MetricTargets &targets, TargetMode mode);

void write_report(std::ostream &out, const MetricReport &report);
MetricReport read_report(std::istream &in);

}  // namespace priorgen

#endif  // PRIORGEN_CHEM_H_
