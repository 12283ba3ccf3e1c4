//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "priorgen/pipeline.h"

#include <charconv>
#include <cstdlib>
#include <stdexcept>

namespace priorgen {
namespace fs = std::filesystem;

namespace {
std::vector<std::string> split_on(const std::string &text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c: text) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

template <typename T>
T parse_number(const std::string &s, const std::string &what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::invalid_argument("bad " + what + " '" + s + "'");
  return v;
}
}  // namespace

std::string_view to_string(XyzDialect dialect) {
  return dialect == XyzDialect::qm9 ? "qm9" : "plain";
}

XyzDialect parse_xyz_dialect(std::string_view text) {
  if (text == "plain") return XyzDialect::plain;
  if (text == "qm9") return XyzDialect::qm9;
  throw std::invalid_argument("unknown xyz dialect '" + std::string(text) + "'");
}

fs::path resolve_data_path(const std::string &path) {
  fs::path p(path);
  if (fs::exists(p) || p.is_absolute()) return fs::absolute(p);
  if (const char *dir = std::getenv(kDataDirEnv); dir != nullptr && *dir != '\0') {
    fs::path q = fs::path(dir) / p;
    if (fs::exists(q)) return fs::absolute(q);
  }
  return fs::absolute(p);
}

Dataset load_source(const DataSource &source, const std::vector<std::string> &alphabet) {
  if (!source.is_toy()) {
    const fs::path p = resolve_data_path(source.spec);
    if (!fs::exists(p)) throw std::invalid_argument("dataset not found: " + source.spec);
    return load_dataset(p, source.format, source.dialect, alphabet);
  }
  const auto parts = split_on(source.spec, ':');
  if (parts.size() != 4)
    throw std::invalid_argument("toy source must read toy:SEED:SIZE:RINGS, got '" +
                                source.spec + "'");
  std::set<int> rings;
  for (const auto &r: split_on(parts[3], ',')) rings.insert(parse_number<int>(r, "ring count"));
  Dataset ds;
  ds.source = source.spec;
  ds.molecules = generate_toy_dataset(parse_number<std::uint64_t>(parts[1], "toy seed"),
                                      parse_number<int>(parts[2], "toy size"), rings);
  return ds;
}

void stamp_source(DatasetManifest &manifest, const DataSource &source) {
  manifest.source = source.is_toy() ? source.spec : resolve_data_path(source.spec).string();
  manifest.meta["format"] = std::string(to_string(source.format));
  manifest.meta["dialect"] = std::string(to_string(source.dialect));
}

DataSource manifest_source(const DatasetManifest &manifest) {
  DataSource s;
  s.spec = manifest.source;
  if (auto it = manifest.meta.find("format"); it != manifest.meta.end())
    s.format = parse_dataset_format(it->second);
  if (auto it = manifest.meta.find("dialect"); it != manifest.meta.end())
    s.dialect = parse_xyz_dialect(it->second);
  return s;
}

std::vector<TrainingPair> split_pairs(const DatasetManifest &manifest, const Dataset &dataset,
                                      const std::string &split) {
  manifest.validate(static_cast<int>(dataset.molecules.size()));
  return extract_training_pairs(dataset, manifest.ids(split), manifest.pair_kind).pairs;
}

std::vector<PreparedPair> prepare_pairs(const std::vector<TrainingPair> &pairs,
                                        const FeatureScaler &scaler) {
  std::vector<PreparedPair> out;
  out.reserve(pairs.size());
  for (const auto &p: pairs) out.push_back(prepare_pair(p, scaler));
  return out;
}

std::set<Digest> split_hashes(const DatasetManifest &manifest, const Dataset &dataset,
                              const std::string &split) {
  std::set<Digest> out;
  for (int id: manifest.ids(split)) out.insert(canonical_hash(infer_bonds(dataset.molecules[id])));
  return out;
}

}  // namespace priorgen
