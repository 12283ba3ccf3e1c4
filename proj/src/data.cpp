//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "priorgen/data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace priorgen {

std::string_view to_string(DatasetFormat format) {
  return format == DatasetFormat::xyz_dir ? "xyz_dir" : "concatenated_xyz";
}

DatasetFormat parse_dataset_format(std::string_view text) {
  if (text == "xyz_dir") return DatasetFormat::xyz_dir;
  if (text == "concatenated_xyz") return DatasetFormat::concatenated_xyz;
  throw std::invalid_argument("unknown dataset format '" + std::string(text) + "'");
}

Dataset load_dataset(const std::filesystem::path &path, DatasetFormat format,
                     XyzDialect dialect, const std::vector<std::string> &alphabet) {
  namespace fs = std::filesystem;
  Dataset ds;
  ds.source = path.string();
  if (format == DatasetFormat::xyz_dir) {
    if (!fs::is_directory(path)) throw std::runtime_error("cannot read directory " + ds.source);
    std::vector<fs::path> files;
    for (const auto &entry: fs::directory_iterator(path))
      if (entry.is_regular_file() && entry.path().extension() == ".xyz")
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto &f: files) {
      auto res = read_xyz_file(f, alphabet, true, dialect);
      ds.skipped += res.skipped;
      if (res.records.empty()) {
        ++ds.skipped;
        continue;
      }
      ds.molecules.push_back(std::move(res.records.front().mol));
    }
  } else {
    auto res = read_xyz_file(path, alphabet, true, dialect);
    ds.skipped = res.skipped;
    for (auto &r: res.records) ds.molecules.push_back(std::move(r.mol));
  }
  if (ds.skipped > 0)
    std::clog << "load_dataset: skipped " << ds.skipped << " malformed record(s) in "
              << ds.source << "\n";
  if (ds.molecules.empty()) throw std::runtime_error("no molecules parsed from " + ds.source);
  return ds;
}

std::vector<int> DatasetManifest::ids(const std::string &split) const {
  std::vector<int> out;
  for (const auto &e: entries)
    if (e.split == split) out.push_back(e.id);
  return out;
}

std::vector<std::string> DatasetManifest::splits() const {
  std::vector<std::string> out;
  for (const auto &e: entries)
    if (std::find(out.begin(), out.end(), e.split) == out.end()) out.push_back(e.split);
  return out;
}

int DatasetManifest::molecule_count(const std::string &split) const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(),
                                        [&](const ManifestEntry &e) { return e.split == split; }));
}

int DatasetManifest::scaffold_count(const std::string &split) const {
  std::set<Digest> s;
  for (const auto &e: entries)
    if (e.split == split) s.insert(e.scaffold);
  return static_cast<int>(s.size());
}

std::map<int, int> DatasetManifest::ring_histogram(const std::string &split) const {
  std::map<int, int> h;
  for (const auto &e: entries)
    if (split.empty() || e.split == split) ++h[e.ring_count];
  return h;
}

std::string DatasetManifest::training_split() const {
  return rule.starts_with("scaffold") ? kSplitInDist : kSplitTrain;
}

void DatasetManifest::validate(std::optional<int> dataset_size) const {
  const int n = dataset_size.value_or(static_cast<int>(entries.size()));
  if (static_cast<int>(entries.size()) != n)
    throw std::invalid_argument("manifest does not cover the dataset");
  std::vector<bool> seen(n, false);
  for (const auto &e: entries) {
    if (e.id < 0 || e.id >= n) throw std::invalid_argument("manifest id out of range");
    if (seen[e.id]) throw std::invalid_argument("manifest assigns a molecule twice");
    seen[e.id] = true;
    if (e.split.empty()) throw std::invalid_argument("manifest entry without split");
  }
}

namespace {
struct MoleculeFacts {
  int rings = 0;
  Digest scaffold;
  int atoms = 0;
  int ring_atoms = 0;
  int scaffold_atoms = 0;
};

MoleculeFacts facts(const MolecularPointCloud &mol) {
  MoleculeFacts f;
  auto bg = infer_bonds(mol);
  f.rings = ring_count(bg);
  auto keep = murcko_scaffold_atoms(bg);
  f.scaffold = keep.empty() ? empty_scaffold_digest() : canonical_hash(bg.induced(keep));
  f.atoms = mol.atom_count();
  auto on = ring_atoms(bg);
  f.ring_atoms = static_cast<int>(std::count(on.begin(), on.end(), true));
  f.scaffold_atoms = static_cast<int>(keep.size());
  return f;
}

std::string join(const std::set<int> &s) {
  std::string out;
  for (int v: s) out += (out.empty() ? "" : ",") + std::to_string(v);
  return out;
}

void fill_histograms(DatasetManifest &m) {
  const std::string train = m.training_split();
  for (const auto &e: m.entries) {
    if (e.split != train) continue;
    ++m.size_histogram[e.atoms];
    if (e.sub_atoms >= 0) ++m.delta_histogram[e.atoms - e.sub_atoms];
  }
}
}  // namespace

DatasetManifest split_by_ring_count(const Dataset &dataset, const std::set<int> &train_counts,
                                    const std::set<int> &ood_counts) {
  if (dataset.molecules.empty()) throw std::invalid_argument("empty dataset");
  for (int c: train_counts)
    if (ood_counts.contains(c))
      throw std::invalid_argument("ring count " + std::to_string(c) + " in both train and ood");
  DatasetManifest m;
  m.source = dataset.source;
  m.rule = "ring train=" + join(train_counts) + " ood=" + join(ood_counts);
  m.pair_kind = SubstructureKind::ring_system;
  m.alphabet = dataset.molecules.front().alphabet;
  for (int id = 0; id < static_cast<int>(dataset.molecules.size()); ++id) {
    auto f = facts(dataset.molecules[id]);
    ManifestEntry e{id, kSplitUnassigned, f.rings, f.scaffold, f.atoms,
                    f.ring_atoms > 0 ? f.ring_atoms : -1};
    if (train_counts.contains(f.rings)) e.split = kSplitTrain;
    if (ood_counts.contains(f.rings)) e.split = kSplitOod;
    m.entries.push_back(std::move(e));
  }
  fill_histograms(m);
  m.validate(static_cast<int>(dataset.molecules.size()));
  return m;
}

DatasetManifest split_by_scaffold_frequency(const Dataset &dataset,
                                            FrequencyThresholds thresholds) {
  if (dataset.molecules.empty()) throw std::invalid_argument("empty dataset");
  if (thresholds.low < 1 || thresholds.high < thresholds.low)
    throw std::invalid_argument("scaffold thresholds need 1 <= low <= high");
  DatasetManifest m;
  m.source = dataset.source;
  m.rule = "scaffold high=" + std::to_string(thresholds.high) +
           " low=" + std::to_string(thresholds.low);
  m.pair_kind = SubstructureKind::scaffold;
  m.alphabet = dataset.molecules.front().alphabet;
  std::vector<MoleculeFacts> all;
  std::map<Digest, int> freq;
  for (const auto &mol: dataset.molecules) {
    all.push_back(facts(mol));
    ++freq[all.back().scaffold];
  }
  for (int id = 0; id < static_cast<int>(all.size()); ++id) {
    const auto &f = all[id];
    const int count = freq[f.scaffold];
    const char *split = count >= thresholds.high  ? kSplitInDist
                        : count >= thresholds.low ? kSplitOod1
                                                  : kSplitOod2;
    m.entries.push_back(
        {id, split, f.rings, f.scaffold, f.atoms, f.scaffold_atoms > 0 ? f.scaffold_atoms : -1});
  }
  fill_histograms(m);
  m.validate(static_cast<int>(dataset.molecules.size()));
  return m;
}

namespace {
std::string histogram_text(const std::map<int, int> &h) {
  std::string out;
  for (auto [k, v]: h) out += (out.empty() ? "" : ",") + std::to_string(k) + ":" + std::to_string(v);
  return out;
}

std::map<int, int> parse_histogram(const std::string &text) {
  std::map<int, int> h;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    auto colon = item.find(':');
    if (colon == std::string::npos) throw std::runtime_error("manifest: bad histogram item");
    h[std::stoi(item.substr(0, colon))] = std::stoi(item.substr(colon + 1));
  }
  return h;
}

constexpr const char *kManifestMagic = "# priorgen manifest v1";
constexpr const char *kManifestColumns = "id\tsplit\tring_count\tscaffold\tatoms\tsub_atoms";
}  // namespace

void write_manifest(std::ostream &out, const DatasetManifest &m) {
  out << kManifestMagic << "\n";
  out << "# source=" << m.source << "\n";
  out << "# rule=" << m.rule << "\n";
  out << "# pair_kind=" << to_string(m.pair_kind) << "\n";
  std::string alpha;
  for (const auto &a: m.alphabet) alpha += (alpha.empty() ? "" : ",") + a;
  out << "# alphabet=" << alpha << "\n";
  out << "# size_histogram=" << histogram_text(m.size_histogram) << "\n";
  out << "# delta_histogram=" << histogram_text(m.delta_histogram) << "\n";
  for (const auto &[k, v]: m.meta) out << "# meta." << k << "=" << v << "\n";
  out << kManifestColumns << "\n";
  for (const auto &e: m.entries)
    out << e.id << "\t" << e.split << "\t" << e.ring_count << "\t" << e.scaffold << "\t"
        << e.atoms << "\t" << e.sub_atoms << "\n";
}

DatasetManifest read_manifest(std::istream &in) {
  DatasetManifest m;
  std::string line;
  if (!std::getline(in, line) || line != kManifestMagic)
    throw std::runtime_error("not a priorgen manifest (expected '" + std::string(kManifestMagic) +
                             "')");
  bool columns = false;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.starts_with("# ")) {
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2), value = line.substr(eq + 1);
      if (key == "source") m.source = value;
      else if (key == "rule") m.rule = value;
      else if (key == "pair_kind") m.pair_kind = parse_substructure_kind(value);
      else if (key == "alphabet") {
        m.alphabet.clear();
        std::istringstream as(value);
        for (std::string a; std::getline(as, a, ',');) m.alphabet.push_back(a);
      } else if (key == "size_histogram") m.size_histogram = parse_histogram(value);
      else if (key == "delta_histogram") m.delta_histogram = parse_histogram(value);
      else if (key.starts_with("meta.")) m.meta[key.substr(5)] = value;
      continue;
    }
    if (!columns) {
      if (line != kManifestColumns) throw std::runtime_error("manifest: missing column header");
      columns = true;
      continue;
    }
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.id >> e.split >> e.ring_count >> e.scaffold >> e.atoms >> e.sub_atoms))
      throw std::runtime_error("manifest: malformed line " + std::to_string(lineno));
    m.entries.push_back(std::move(e));
  }
  std::sort(m.entries.begin(), m.entries.end(),
            [](const ManifestEntry &a, const ManifestEntry &b) { return a.id < b.id; });
  m.validate();
  return m;
}

void write_manifest_file(const std::filesystem::path &path, const DatasetManifest &manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_manifest(out, manifest);
}

DatasetManifest read_manifest_file(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_manifest(in);
}

std::vector<int> substructure_atoms(const BondGraph &bg, SubstructureKind kind) {
  switch (kind) {
    case SubstructureKind::scaffold: return murcko_scaffold_atoms(bg);
    case SubstructureKind::ring_system: {
      auto on = ring_atoms(bg);
      std::vector<int> out;
      for (int a = 0; a < bg.atom_count(); ++a)
        if (on[a]) out.push_back(a);
      return out;
    }
    case SubstructureKind::fragment: break;
  }
  throw std::invalid_argument("fragment substructures need explicit atom indices");
}

std::optional<TrainingPair> extract_training_pair(const MolecularPointCloud &mol,
                                                  SubstructureKind kind,
                                                  std::span<const int> fragment) {
  mol.validate();
  std::vector<int> idx;
  if (kind == SubstructureKind::fragment) {
    if (fragment.empty()) throw std::invalid_argument("fragment mode needs atom indices");
    std::set<int> seen;
    for (int a: fragment) {
      if (a < 0 || a >= mol.atom_count() || !seen.insert(a).second)
        throw std::invalid_argument("bad fragment atom index " + std::to_string(a));
      idx.push_back(a);
    }
  } else {
    idx = substructure_atoms(infer_bonds(mol), kind);
    if (idx.empty()) return std::nullopt;
  }
  TrainingPair pair;
  pair.mol = mol;
  MolecularPointCloud sub = mol.select(idx);
  sub.coords = center_of_gravity_project(sub.coords);
  pair.sub = Substructure{std::move(sub), kind};
  pair.index_map = std::move(idx);
  return pair;
}

PairExtraction extract_training_pairs(const Dataset &dataset, std::span<const int> ids,
                                      SubstructureKind kind) {
  PairExtraction out;
  for (int id: ids) {
    if (id < 0 || id >= static_cast<int>(dataset.molecules.size()))
      throw std::out_of_range("molecule id " + std::to_string(id) + " not in dataset");
    auto pair = extract_training_pair(dataset.molecules[id], kind);
    if (!pair) {
      ++out.excluded;
      continue;
    }
    pair->id = id;
    out.pairs.push_back(std::move(*pair));
  }
  return out;
}

namespace {
using Vec2 = Eigen::Vector2d;

class ToyBuilder {
 public:
  ToyBuilder(Rng &rng, const ToyOptions &opt) : rng_(rng), opt_(opt) {}

  std::optional<MolecularPointCloud> build(int rings) {
    pos_.clear();
    adj_.clear();
    polygons_.clear();
    if (rings == 0) {
      chain_backbone(uniform(2, 6));
    } else {
      add_first_polygon(uniform(3, 6));
      for (int r = 1; r < rings; ++r)
        if (!fuse_polygon()) return std::nullopt;
    }
    const int pendants = uniform(0, opt_.max_pendants);
    for (int p = 0; p < pendants; ++p) add_pendant_chain(uniform(1, opt_.max_chain));
    return finish();
  }

 private:
  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  int add_atom(const Vec2 &p) {
    pos_.push_back(p);
    adj_.emplace_back();
    return static_cast<int>(pos_.size()) - 1;
  }

  void bond(int a, int b) {
    adj_[a].push_back(b);
    adj_[b].push_back(a);
  }

  bool clear_of(const Vec2 &p, const std::vector<int> &allowed) const {
    constexpr double kMinGap = 1.8;
    for (int a = 0; a < static_cast<int>(pos_.size()); ++a) {
      if (std::find(allowed.begin(), allowed.end(), a) != allowed.end()) continue;
      if ((pos_[a] - p).norm() < kMinGap) return false;
    }
    return true;
  }

  void chain_backbone(int n) {
    const double l = opt_.bond_length;
    const double dx = l * std::cos(std::numbers::pi / 6), dy = l * std::sin(std::numbers::pi / 6);
    for (int k = 0; k < n; ++k) {
      add_atom(Vec2(k * dx, k % 2 ? dy : 0.0));
      if (k > 0) bond(k - 1, k);
    }
  }

  void add_first_polygon(int s) {
    const double radius = opt_.bond_length / (2 * std::sin(std::numbers::pi / s));
    std::vector<int> ring;
    for (int k = 0; k < s; ++k) {
      const double t = 2 * std::numbers::pi * k / s;
      ring.push_back(add_atom(Vec2(radius * std::cos(t), radius * std::sin(t))));
    }
    for (int k = 0; k < s; ++k) bond(ring[k], ring[(k + 1) % s]);
    polygons_.push_back(ring);
  }

  Vec2 centroid(const std::vector<int> &atoms) const {
    Vec2 c = Vec2::Zero();
    for (int a: atoms) c += pos_[a];
    return c / static_cast<double>(atoms.size());
  }

  bool fuse_polygon() {
    // Outer edges: consecutive polygon atoms that both have degree 2.
    std::vector<std::pair<int, int>> edges;
    for (std::size_t r = 0; r < polygons_.size(); ++r) {
      const auto &ring = polygons_[r];
      for (std::size_t k = 0; k < ring.size(); ++k) {
        int a = ring[k], b = ring[(k + 1) % ring.size()];
        if (adj_[a].size() == 2 && adj_[b].size() == 2) edges.emplace_back(static_cast<int>(r), static_cast<int>(k));
      }
    }
    std::shuffle(edges.begin(), edges.end(), rng_);
    for (auto [r, k]: edges) {
      const auto &ring = polygons_[r];
      const int a = ring[k], b = ring[(k + 1) % ring.size()];
      const int s = uniform(3, 6);
      const double l = opt_.bond_length;
      const double apothem = l / (2 * std::tan(std::numbers::pi / s));
      const Vec2 mid = 0.5 * (pos_[a] + pos_[b]);
      Vec2 normal(-(pos_[b] - pos_[a]).y(), (pos_[b] - pos_[a]).x());
      normal.normalize();
      if (normal.dot(mid - centroid(ring)) < 0) normal = -normal;
      const Vec2 center = mid + apothem * normal;
      const double radius = l / (2 * std::sin(std::numbers::pi / s));
      const Vec2 ra = pos_[a] - center, rb = pos_[b] - center;
      const double ta = std::atan2(ra.y(), ra.x());
      const double cross = ra.x() * rb.y() - ra.y() * rb.x();
      const double step = (cross > 0 ? 1 : -1) * 2 * std::numbers::pi / s;
      std::vector<Vec2> fresh;
      bool ok = true;
      for (int j = 2; j < s && ok; ++j) {
        const double t = ta + j * step;
        Vec2 p = center + radius * Vec2(std::cos(t), std::sin(t));
        std::vector<int> allowed;
        if (j == 2) allowed.push_back(b);
        if (j == s - 1) allowed.push_back(a);
        ok = clear_of(p, allowed);
        fresh.push_back(p);
      }
      if (!ok) continue;
      std::vector<int> poly = {a, b};
      int prev = b;
      for (const Vec2 &p: fresh) {
        int v = add_atom(p);
        bond(prev, v);
        poly.push_back(v);
        prev = v;
      }
      bond(prev, a);
      polygons_.push_back(poly);
      return true;
    }
    return false;
  }

  void add_pendant_chain(int length) {
    std::vector<int> anchors;
    for (int a = 0; a < static_cast<int>(pos_.size()); ++a)
      if (adj_[a].size() == 2) anchors.push_back(a);
    if (anchors.empty()) return;
    const int anchor = anchors[uniform(0, static_cast<int>(anchors.size()) - 1)];
    Vec2 out = pos_[anchor] - 0.5 * (pos_[adj_[anchor][0]] + pos_[adj_[anchor][1]]);
    if (out.norm() < 1e-9) return;
    out.normalize();
    const double turn = std::numbers::pi / 6;
    int prev = anchor;
    for (int k = 0; k < length; ++k) {
      const double t = k % 2 ? -turn : turn;
      Vec2 dir(std::cos(t) * out.x() - std::sin(t) * out.y(),
               std::sin(t) * out.x() + std::cos(t) * out.y());
      Vec2 p = pos_[prev] + opt_.bond_length * dir;
      if (!clear_of(p, {prev})) return;
      int v = add_atom(p);
      bond(prev, v);
      prev = v;
    }
  }

  MolecularPointCloud finish() {
    const int n = static_cast<int>(pos_.size());
    std::vector<std::string> el(n);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int a = 0; a < n; ++a) {
      const double x = u(rng_);
      if (adj_[a].size() >= 3) el[a] = x < 0.8 ? "C" : "N";
      else el[a] = x < 0.7 ? "C" : x < 0.85 ? "N" : "O";
    }
    std::normal_distribution<double> jitter(0.0, opt_.jitter);
    Matrix coords(n, 3);
    for (int a = 0; a < n; ++a) coords.row(a) << pos_[a].x(), pos_[a].y(), jitter(rng_);
    Eigen::Matrix3d r = random_rotation(rng_);
    coords = center_of_gravity_project(coords) * r.transpose();
    return MolecularPointCloud::from_atoms(el, coords, std::vector<int>(n, 0));
  }

  Rng &rng_;
  const ToyOptions &opt_;
  std::vector<Vec2> pos_;
  std::vector<std::vector<int>> adj_;
  std::vector<std::vector<int>> polygons_;
};
}  // namespace

std::vector<MolecularPointCloud> generate_toy_dataset(std::uint64_t seed, int size,
                                                      const std::set<int> &ring_range,
                                                      const ToyOptions &options) {
  if (size < 1) throw std::invalid_argument("toy dataset size must be positive");
  if (ring_range.empty() || *ring_range.begin() < 0 || *ring_range.rbegin() > kMaxToyRings)
    throw std::invalid_argument("infeasible ring_range: ring counts must lie in 0.." +
                                std::to_string(kMaxToyRings));
  Rng rng = make_rng(seed, 7);
  const std::vector<int> counts(ring_range.begin(), ring_range.end());
  ToyBuilder builder(rng, options);
  std::vector<MolecularPointCloud> out;
  while (static_cast<int>(out.size()) < size) {
    const int rings =
        counts[std::uniform_int_distribution<int>(0, static_cast<int>(counts.size()) - 1)(rng)];
    std::optional<MolecularPointCloud> mol;
    for (int attempt = 0; attempt < 200 && !mol; ++attempt) {
      mol = builder.build(rings);
      if (!mol) continue;
      auto bg = infer_bonds(*mol);
      if (!is_valid(bg) || ring_count(bg) != rings) mol.reset();
    }
    if (!mol) throw std::runtime_error("toy generator failed for " + std::to_string(rings) + " rings");
    out.push_back(std::move(*mol));
  }
  return out;
}

}  // namespace priorgen
