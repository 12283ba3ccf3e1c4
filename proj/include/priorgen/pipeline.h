//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef PRIORGEN_PIPELINE_H_
#define PRIORGEN_PIPELINE_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "priorgen/data.h"
#include "priorgen/eaae.h"

namespace priorgen {

/// Version tag written into sample, report and log headers.
inline constexpr int kArtifactVersion = 1;

inline constexpr const char *kDataDirEnv = "PRIORGEN_DATA_DIR";

std::string_view to_string(XyzDialect dialect);
XyzDialect parse_xyz_dialect(std::string_view text);

/// A path that does not exist relative to the working directory is looked
/// up under $PRIORGEN_DATA_DIR.  Returns the absolute path.
std::filesystem::path resolve_data_path(const std::string &path);

/// Where a dataset comes from: a path, or "toy:SEED:SIZE:R1,R2,..." for a
/// generated toy corpus.
struct DataSource {
  std::string spec;
  DatasetFormat format = DatasetFormat::xyz_dir;
  XyzDialect dialect = XyzDialect::plain;

  bool is_toy() const { return spec.starts_with("toy:"); }
};

Dataset load_source(const DataSource &source,
                    const std::vector<std::string> &alphabet = default_alphabet());

/// Records the source in the manifest meta so later commands can reload it.
void stamp_source(DatasetManifest &manifest, const DataSource &source);
DataSource manifest_source(const DatasetManifest &manifest);

/// Training pairs for the molecules of one split, in id order; molecules
/// without a substructure of the manifest's kind are dropped.
std::vector<TrainingPair> split_pairs(const DatasetManifest &manifest, const Dataset &dataset,
                                      const std::string &split);

std::vector<PreparedPair> prepare_pairs(const std::vector<TrainingPair> &pairs,
                                        const FeatureScaler &scaler);

/// Canonical hashes of the molecules of a split (training-set novelty).
std::set<Digest> split_hashes(const DatasetManifest &manifest, const Dataset &dataset,
                              const std::string &split);

}  // namespace priorgen

#endif  // PRIORGEN_PIPELINE_H_
