//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "priorgen/xyz_io.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace priorgen {
namespace {
bool parse_count(const std::string &line, int &count) {
  std::istringstream ss(line);
  long long value = 0;
  if (!(ss >> value) || value <= 0 || value > 100000) return false;
  std::string rest;
  if (ss >> rest) return false;
  count = static_cast<int>(value);
  return true;
}

bool parse_atom(std::string line, std::string &symbol, double xyz[3], int &charge,
                XyzDialect dialect) {
  if (dialect == XyzDialect::qm9)
    for (auto at = line.find("*^"); at != std::string::npos; at = line.find("*^"))
      line.replace(at, 2, "e");
  std::istringstream ss(line);
  if (!(ss >> symbol >> xyz[0] >> xyz[1] >> xyz[2])) return false;
  if (!std::isfinite(xyz[0]) || !std::isfinite(xyz[1]) ||
      !std::isfinite(xyz[2]))
    return false;
  charge = 0;
  std::string extra;
  if (dialect == XyzDialect::qm9) {
    // Fifth column is a partial charge; formal charges are all zero.
    double partial = 0;
    if (ss >> extra) {
      std::istringstream ps(extra);
      if (!(ps >> partial)) return false;
    }
    return true;
  }
  if (ss >> extra) {
    double q = 0;
    auto [ptr, ec] = std::from_chars(extra.data(), extra.data() + extra.size(), q);
    if (ec != std::errc() || ptr != extra.data() + extra.size()) return false;
    if (q != std::round(q)) return false;
    charge = static_cast<int>(q);
    if (ss >> extra) return false;
  }
  return true;
}
}  // namespace

XyzReadResult read_xyz_stream(std::istream &in,
                              const std::vector<std::string> &alphabet,
                              bool has_charge, XyzDialect dialect) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }

  XyzReadResult result;
  std::size_t pos = 0;
  while (pos < lines.size()) {
    if (lines[pos].find_first_not_of(" \t") == std::string::npos) {
      ++pos;
      continue;
    }
    int count = 0;
    if (!parse_count(lines[pos], count)) {
      // Not at a record boundary: skip forward to the next count line.
      // The qm9 dialect carries frequency/SMILES/InChI trailer lines.
      if (dialect != XyzDialect::qm9) ++result.skipped;
      ++pos;
      while (pos < lines.size() && !parse_count(lines[pos], count)) ++pos;
      continue;
    }
    if (pos + 2 + static_cast<std::size_t>(count) > lines.size()) {
      ++result.skipped;
      break;
    }
    std::vector<std::string> symbols(count);
    std::vector<int> charges(count);
    Matrix coords(count, 3);
    bool ok = true;
    for (int i = 0; i < count && ok; ++i) {
      double xyz[3];
      ok = parse_atom(lines[pos + 2 + i], symbols[i], xyz, charges[i], dialect);
      if (ok) coords.row(i) << xyz[0], xyz[1], xyz[2];
    }
    if (ok) {
      try {
        XyzRecord rec{MolecularPointCloud::from_atoms(symbols, coords, charges,
                                                      alphabet, has_charge),
                      lines[pos + 1]};
        result.records.push_back(std::move(rec));
      } catch (const std::invalid_argument &) {
        ok = false;
      }
    }
    if (!ok) ++result.skipped;
    pos += 2 + count;
  }
  return result;
}

XyzReadResult read_xyz_file(const std::filesystem::path &path,
                            const std::vector<std::string> &alphabet,
                            bool has_charge, XyzDialect dialect) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_xyz_stream(in, alphabet, has_charge, dialect);
}

void write_xyz(std::ostream &out, const MolecularPointCloud &mol,
               const std::string &comment) {
  const MolecularPointCloud plain = mol.scaling ? unscale_features(mol) : mol;
  out << plain.atom_count() << '\n' << comment << '\n';
  out << std::fixed << std::setprecision(8);
  for (int i = 0; i < plain.atom_count(); ++i) {
    out << plain.element(i) << ' ' << plain.coords(i, 0) << ' '
        << plain.coords(i, 1) << ' ' << plain.coords(i, 2);
    if (plain.has_charge) out << ' ' << plain.charge(i);
    out << '\n';
  }
}

void write_xyz_file(const std::filesystem::path &path,
                    const MolecularPointCloud &mol,
                    const std::string &comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_xyz(out, mol, comment);
}

}  // namespace priorgen
