//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef PRIORGEN_XYZ_IO_H_
#define PRIORGEN_XYZ_IO_H_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "priorgen/core.h"

namespace priorgen {

// Plain-text molecule format:
//   line 1: atom count
//   line 2: free comment (charge annotations, provenance)
//   then one "SYMBOL x y z [charge]" row per atom, Angstrom units.

/// `qm9` accepts Mathematica-style "*^" exponents, treats the fifth column as
/// a partial charge (formal charge 0) and ignores trailer lines after a record.
enum class XyzDialect { plain, qm9 };

struct XyzRecord {
  MolecularPointCloud mol;
  std::string comment;
};

struct XyzReadResult {
  std::vector<XyzRecord> records;
  int skipped = 0;
};

/// Reads every record in a stream.  Malformed records are skipped and
/// counted; the reader resynchronises on the next parseable count line.
XyzReadResult read_xyz_stream(std::istream &in,
                              const std::vector<std::string> &alphabet,
                              bool has_charge = true,
                              XyzDialect dialect = XyzDialect::plain);

XyzReadResult read_xyz_file(const std::filesystem::path &path,
                            const std::vector<std::string> &alphabet,
                            bool has_charge = true,
                            XyzDialect dialect = XyzDialect::plain);

void write_xyz(std::ostream &out, const MolecularPointCloud &mol,
               const std::string &comment = {});

void write_xyz_file(const std::filesystem::path &path,
                    const MolecularPointCloud &mol,
                    const std::string &comment = {});

}  // namespace priorgen

#endif  // PRIORGEN_XYZ_IO_H_
