//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef PRIORGEN_DATA_H_
#define PRIORGEN_DATA_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "priorgen/chem.h"
#include "priorgen/core.h"
#include "priorgen/xyz_io.h"

namespace priorgen {

enum class DatasetFormat { xyz_dir, concatenated_xyz };

std::string_view to_string(DatasetFormat format);
DatasetFormat parse_dataset_format(std::string_view text);

struct Dataset {
  std::string source;
  std::vector<MolecularPointCloud> molecules;
  int skipped = 0;
};

/// `xyz_dir` reads every *.xyz file of a directory in name order (first
/// record per file); `concatenated_xyz` reads one multi-record file.  Throws
/// when the path is unreadable or nothing parses.
Dataset load_dataset(const std::filesystem::path &path, DatasetFormat format,
                     XyzDialect dialect = XyzDialect::plain,
                     const std::vector<std::string> &alphabet = default_alphabet());

inline constexpr const char *kSplitTrain = "train";
inline constexpr const char *kSplitOod = "ood";
inline constexpr const char *kSplitUnassigned = "unassigned";
inline constexpr const char *kSplitInDist = "in_dist";
inline constexpr const char *kSplitOod1 = "ood_1";
inline constexpr const char *kSplitOod2 = "ood_2";

struct ManifestEntry {
  int id = 0;
  std::string split;
  int ring_count = 0;
  Digest scaffold;
  int atoms = 0;
  /// Conditioning substructure size, -1 when the molecule has none.
  int sub_atoms = -1;

  bool operator==(const ManifestEntry &) const = default;
};

struct DatasetManifest {
  std::string source;
  std::string rule;
  SubstructureKind pair_kind = SubstructureKind::ring_system;
  std::vector<std::string> alphabet = default_alphabet();
  std::vector<ManifestEntry> entries;
  /// Atom-count and (N - N') histograms over the training split.
  std::map<int, int> size_histogram;
  std::map<int, int> delta_histogram;
  std::map<std::string, std::string> meta;

  std::vector<int> ids(const std::string &split) const;
  std::vector<std::string> splits() const;
  int molecule_count(const std::string &split) const;
  int scaffold_count(const std::string &split) const;
  /// Ring-count histogram of a split (all entries when `split` is empty).
  std::map<int, int> ring_histogram(const std::string &split = {}) const;
  std::string training_split() const;

  /// Ids are 0..n-1 each exactly once: splits are disjoint and cover the data.
  void validate(std::optional<int> dataset_size = std::nullopt) const;
  bool operator==(const DatasetManifest &) const = default;
};

DatasetManifest split_by_ring_count(const Dataset &dataset,
                                    const std::set<int> &train_counts = {0, 1, 2, 3},
                                    const std::set<int> &ood_counts = {4, 5, 6, 7, 8});

struct FrequencyThresholds {
  int high = 100;
  int low = 10;
};

DatasetManifest split_by_scaffold_frequency(const Dataset &dataset,
                                            FrequencyThresholds thresholds = {});

void write_manifest(std::ostream &out, const DatasetManifest &manifest);
DatasetManifest read_manifest(std::istream &in);
void write_manifest_file(const std::filesystem::path &path, const DatasetManifest &manifest);
DatasetManifest read_manifest_file(const std::filesystem::path &path);

/// Substructure atoms of `mol` for a kind; empty when it has none.
std::vector<int> substructure_atoms(const BondGraph &bg, SubstructureKind kind);

/// Pair of a molecule with its substructure (rows of the parent, CoG-projected).
/// Returns nothing when scaffold or ring_system mode finds no substructure.
/// Fragment mode requires `fragment` indices.
std::optional<TrainingPair> extract_training_pair(const MolecularPointCloud &mol,
                                                  SubstructureKind kind,
                                                  std::span<const int> fragment = {});

struct PairExtraction {
  std::vector<TrainingPair> pairs;
  int excluded = 0;
};

PairExtraction extract_training_pairs(const Dataset &dataset, std::span<const int> ids,
                                      SubstructureKind kind);

struct ToyOptions {
  double bond_length = 1.45;
  double jitter = 0.02;
  int max_pendants = 3;
  int max_chain = 3;
};

inline constexpr int kMaxToyRings = 8;

/// Planar fused-polygon molecules whose ring counts lie in `ring_range`.
std::vector<MolecularPointCloud> generate_toy_dataset(std::uint64_t seed, int size,
                                                      const std::set<int> &ring_range,
                                                      const ToyOptions &options = {});

}  // namespace priorgen

#endif  // PRIORGEN_DATA_H_
