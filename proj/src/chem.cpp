//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "priorgen/chem.h"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "priorgen/builtin_tables.h"

namespace priorgen {

BondGraph BondGraph::from_bonds(std::vector<std::string> elements, std::vector<int> charges,
                                std::vector<Bond> bonds) {
  if (charges.empty()) charges.assign(elements.size(), 0);
  for (auto &b: bonds)
    if (b.i > b.j) std::swap(b.i, b.j);
  std::sort(bonds.begin(), bonds.end());
  BondGraph bg{std::move(elements), std::move(charges), std::move(bonds)};
  bg.validate();
  return bg;
}

void BondGraph::validate() const {
  const int n = atom_count();
  if (static_cast<int>(charges.size()) != n)
    throw std::invalid_argument("bond graph: charge count mismatch");
  for (std::size_t k = 0; k < bonds.size(); ++k) {
    const Bond &b = bonds[k];
    if (b.i < 0 || b.j >= n || b.i >= b.j)
      throw std::invalid_argument("bond graph: bad bond endpoints");
    if (b.order < 1 || b.order > 3) throw std::invalid_argument("bond graph: bad bond order");
    if (k > 0) {
      const Bond &p = bonds[k - 1];
      if (p.i == b.i && p.j == b.j) throw std::invalid_argument("bond graph: duplicate bond");
      if (p > b) throw std::invalid_argument("bond graph: bonds not sorted");
    }
  }
}

std::vector<std::vector<std::pair<int, int>>> BondGraph::adjacency() const {
  std::vector<std::vector<std::pair<int, int>>> adj(atom_count());
  for (const Bond &b: bonds) {
    adj[b.i].emplace_back(b.j, b.order);
    adj[b.j].emplace_back(b.i, b.order);
  }
  return adj;
}

std::vector<int> BondGraph::bond_order_sums() const {
  std::vector<int> sums(atom_count(), 0);
  for (const Bond &b: bonds) {
    sums[b.i] += b.order;
    sums[b.j] += b.order;
  }
  return sums;
}

std::vector<int> BondGraph::degrees() const {
  std::vector<int> deg(atom_count(), 0);
  for (const Bond &b: bonds) {
    ++deg[b.i];
    ++deg[b.j];
  }
  return deg;
}

int BondGraph::order_between(int a, int b) const {
  if (a > b) std::swap(a, b);
  auto it = std::lower_bound(bonds.begin(), bonds.end(), Bond{a, b, 0});
  return it != bonds.end() && it->i == a && it->j == b ? it->order : 0;
}

BondGraph BondGraph::induced(std::span<const int> atoms) const {
  std::vector<int> where(atom_count(), -1);
  BondGraph out;
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    const int a = atoms[k];
    if (a < 0 || a >= atom_count() || where[a] >= 0)
      throw std::invalid_argument("induced: bad atom index");
    where[a] = static_cast<int>(k);
    out.elements.push_back(elements[a]);
    out.charges.push_back(charges[a]);
  }
  for (const Bond &b: bonds)
    if (where[b.i] >= 0 && where[b.j] >= 0)
      out.bonds.push_back({std::min(where[b.i], where[b.j]), std::max(where[b.i], where[b.j]),
                           b.order});
  std::sort(out.bonds.begin(), out.bonds.end());
  return out;
}

namespace {
std::vector<std::string> data_fields(const std::string &line) {
  std::istringstream ls(line);
  std::vector<std::string> out;
  for (std::string f; ls >> f;) out.push_back(f);
  return out;
}

std::ifstream open_table(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open table " + path);
  return in;
}
}  // namespace

BondTable BondTable::parse(std::istream &in) {
  BondTable t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto f = data_fields(line);
    if (f.empty()) continue;
    if (f.size() != 5) throw std::runtime_error("bond table line " + std::to_string(lineno));
    Band band{std::stoi(f[2]), std::stod(f[3]), std::stod(f[4])};
    if (band.order < 1 || band.order > 3 || !(band.min < band.max))
      throw std::runtime_error("bond table line " + std::to_string(lineno));
    auto key = std::minmax(f[0], f[1]);
    t.bands_[{key.first, key.second}].push_back(band);
  }
  return t;
}

BondTable BondTable::load(const std::string &path) {
  auto in = open_table(path);
  return parse(in);
}

const BondTable &BondTable::builtin() {
  static const BondTable table = [] {
    std::istringstream in(builtin::kBondLengths);
    return parse(in);
  }();
  return table;
}

bool BondTable::knows(const std::string &a, const std::string &b) const {
  auto key = std::minmax(a, b);
  return bands_.contains({key.first, key.second});
}

int BondTable::order(const std::string &a, const std::string &b, double distance) const {
  auto key = std::minmax(a, b);
  auto it = bands_.find({key.first, key.second});
  if (it == bands_.end()) return 0;
  for (const Band &band: it->second)
    if (distance >= band.min && distance < band.max) return band.order;
  return 0;
}

ValenceTable ValenceTable::parse(std::istream &in) {
  ValenceTable t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto f = data_fields(line);
    if (f.empty()) continue;
    if (f.size() != 3) throw std::runtime_error("valence table line " + std::to_string(lineno));
    t.allowed_[{f[0], std::stoi(f[1])}].push_back(std::stoi(f[2]));
  }
  return t;
}

ValenceTable ValenceTable::load(const std::string &path) {
  auto in = open_table(path);
  return parse(in);
}

const ValenceTable &ValenceTable::builtin() {
  static const ValenceTable table = [] {
    std::istringstream in(builtin::kValences);
    return parse(in);
  }();
  return table;
}

const std::vector<int> &ValenceTable::allowed(const std::string &element, int charge) const {
  static const std::vector<int> kNone;
  auto it = allowed_.find({element, charge});
  return it == allowed_.end() ? kNone : it->second;
}

std::optional<int> ValenceTable::max_valence(const std::string &element, int charge) const {
  const auto &v = allowed(element, charge);
  if (v.empty()) return std::nullopt;
  return *std::max_element(v.begin(), v.end());
}

BondGraph atoms_only(const MolecularPointCloud &mol) {
  BondGraph bg;
  bg.elements = mol.elements();
  bg.charges = mol.has_charge ? mol.charges() : std::vector<int>(mol.atom_count(), 0);
  return bg;
}

BondGraph infer_bonds(const MolecularPointCloud &mol, const BondTable &table) {
  if (mol.scaling) throw std::invalid_argument("infer_bonds: coordinates must be unscaled");
  BondGraph bg = atoms_only(mol);
  std::set<std::pair<std::string, std::string>> unknown;
  const int n = mol.atom_count();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const auto &a = bg.elements[i], &b = bg.elements[j];
      if (!table.knows(a, b)) {
        unknown.insert(std::minmax(a, b));
        continue;
      }
      const double d = (mol.coords.row(i) - mol.coords.row(j)).norm();
      if (int order = table.order(a, b, d)) bg.bonds.push_back({i, j, order});
    }
  }
  for (const auto &[a, b]: unknown)
    std::clog << "warning: no bond thresholds for " << a << "-" << b << ", left unbonded\n";
  return bg;
}

AtomStability atom_stability(const BondGraph &bg, const ValenceTable &valences) {
  AtomStability out;
  auto sums = bg.bond_order_sums();
  out.stable.resize(bg.atom_count());
  for (int a = 0; a < bg.atom_count(); ++a) {
    const auto &allowed = valences.allowed(bg.elements[a], bg.charges[a]);
    out.stable[a] = std::find(allowed.begin(), allowed.end(), sums[a]) != allowed.end();
    out.stable_count += out.stable[a];
  }
  return out;
}

bool molecule_stability(const BondGraph &bg, const ValenceTable &valences) {
  if (bg.atom_count() == 0) throw std::invalid_argument("empty");
  return atom_stability(bg, valences).stable_count == bg.atom_count();
}

namespace {
std::vector<int> component_labels(const BondGraph &bg, int *count) {
  const int n = bg.atom_count();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  for (const Bond &b: bg.bonds) parent[find(b.i)] = find(b.j);
  std::vector<int> label(n), root_label(n, -1);
  int c = 0;
  for (int a = 0; a < n; ++a) {
    int r = find(a);
    if (root_label[r] < 0) root_label[r] = c++;
    label[a] = root_label[r];
  }
  if (count) *count = c;
  return label;
}
}  // namespace

int connected_components(const BondGraph &bg) {
  int c = 0;
  component_labels(bg, &c);
  return c;
}

bool is_valid(const BondGraph &bg, const ValenceTable &valences) {
  if (bg.atom_count() == 0 || connected_components(bg) != 1) return false;
  auto sums = bg.bond_order_sums();
  for (int a = 0; a < bg.atom_count(); ++a) {
    auto cap = valences.max_valence(bg.elements[a], bg.charges[a]);
    if (!cap || sums[a] < 1 || sums[a] > *cap) return false;
  }
  return true;
}

int ring_count(const BondGraph &bg) {
  return bg.bond_count() - bg.atom_count() + connected_components(bg);
}

std::vector<bool> ring_atoms(const BondGraph &bg) {
  // An atom is on a cycle iff one of its bonds is not a bridge.
  const int n = bg.atom_count();
  auto adj = bg.adjacency();
  std::vector<int> disc(n, -1), low(n, 0);
  std::set<std::pair<int, int>> bridges;
  int timer = 0;
  std::function<void(int, int)> dfs = [&](int v, int parent) {
    disc[v] = low[v] = timer++;
    for (auto [u, order]: adj[v]) {
      (void)order;
      if (u == parent) continue;
      if (disc[u] >= 0) {
        low[v] = std::min(low[v], disc[u]);
      } else {
        dfs(u, v);
        low[v] = std::min(low[v], low[u]);
        if (low[u] > disc[v]) bridges.insert(std::minmax(u, v));
      }
    }
  };
  for (int v = 0; v < n; ++v)
    if (disc[v] < 0) dfs(v, -1);
  std::vector<bool> on_ring(n, false);
  for (const Bond &b: bg.bonds)
    if (!bridges.contains({b.i, b.j})) on_ring[b.i] = on_ring[b.j] = true;
  return on_ring;
}

std::vector<int> murcko_scaffold_atoms(const BondGraph &bg) {
  const int n = bg.atom_count();
  auto adj = bg.adjacency();
  std::vector<int> deg = bg.degrees();
  std::vector<bool> removed(n, false);
  std::vector<int> queue;
  for (int a = 0; a < n; ++a)
    if (deg[a] <= 1) queue.push_back(a);
  while (!queue.empty()) {
    int a = queue.back();
    queue.pop_back();
    if (removed[a]) continue;
    removed[a] = true;
    for (auto [u, order]: adj[a]) {
      (void)order;
      if (!removed[u] && --deg[u] <= 1) queue.push_back(u);
    }
  }
  std::vector<int> keep;
  for (int a = 0; a < n; ++a)
    if (!removed[a]) keep.push_back(a);
  return keep;
}

std::optional<BondGraph> murcko_scaffold(const BondGraph &bg) {
  auto keep = murcko_scaffold_atoms(bg);
  if (keep.empty()) return std::nullopt;
  return bg.induced(keep);
}

namespace {
struct Matcher {
  const BondGraph &host, &target;
  bool induced;
  std::vector<std::vector<std::pair<int, int>>> host_adj, target_adj;
  std::vector<int> host_deg, target_deg, order, mapping;
  std::vector<bool> used;

  Matcher(const BondGraph &h, const BondGraph &t, bool ind)
      : host(h), target(t), induced(ind), host_adj(h.adjacency()), target_adj(t.adjacency()),
        host_deg(h.degrees()), target_deg(t.degrees()), mapping(t.atom_count(), -1),
        used(h.atom_count(), false) {
    // Connectivity-first order: next the atom with most placed neighbours.
    const int m = t.atom_count();
    std::vector<bool> placed(m, false);
    std::vector<int> links(m, 0);
    for (int k = 0; k < m; ++k) {
      int best = -1;
      for (int v = 0; v < m; ++v) {
        if (placed[v]) continue;
        if (best < 0 || links[v] > links[best] ||
            (links[v] == links[best] && target_deg[v] > target_deg[best]))
          best = v;
      }
      placed[best] = true;
      order.push_back(best);
      for (auto [u, o]: target_adj[best]) {
        (void)o;
        ++links[u];
      }
    }
  }

  bool compatible(int t, int h) const {
    if (used[h] || host.elements[h] != target.elements[t] || host_deg[h] < target_deg[t])
      return false;
    for (int k = 0; k < target.atom_count(); ++k) {
      const int mh = mapping[k];
      if (mh < 0) continue;
      const int want = target.order_between(t, k);
      const int have = host.order_between(h, mh);
      if (want ? have != want : induced && have != 0) return false;
    }
    return true;
  }

  bool search(std::size_t depth) {
    if (depth == order.size()) return true;
    const int t = order[depth];
    for (int h = 0; h < host.atom_count(); ++h) {
      if (!compatible(t, h)) continue;
      mapping[t] = h;
      used[h] = true;
      if (search(depth + 1)) return true;
      mapping[t] = -1;
      used[h] = false;
    }
    return false;
  }
};
}  // namespace

bool contains_substructure(const BondGraph &bg, const BondGraph &target, bool induced) {
  if (target.atom_count() > kMaxSubstructureAtoms)
    throw std::invalid_argument("substructure has " + std::to_string(target.atom_count()) +
                                " atoms, above the search bound of " +
                                std::to_string(kMaxSubstructureAtoms) +
                                "; compare murcko_scaffold hashes instead");
  if (target.atom_count() > bg.atom_count()) return false;
  Matcher m(bg, target, induced);
  return m.search(0);
}

std::string_view to_string(TargetMode mode) {
  switch (mode) {
    case TargetMode::ring: return "ring";
    case TargetMode::scaffold: return "scaffold";
    case TargetMode::fragment: return "fragment";
  }
  return "?";
}

TargetMode parse_target_mode(std::string_view text) {
  if (text == "ring") return TargetMode::ring;
  if (text == "scaffold") return TargetMode::scaffold;
  if (text == "fragment") return TargetMode::fragment;
  throw std::invalid_argument("unknown target mode '" + std::string(text) + "'");
}

std::vector<MoleculeEvaluation> evaluate_molecules(std::span<const BondGraph> generated,
                                                   const std::set<Digest> &training_hashes,
                                                   const MetricTargets &targets,
                                                   TargetMode mode) {
  std::set<Digest> target_scaffolds;
  if (mode == TargetMode::scaffold) {
    if (targets.substructures.empty())
      throw std::invalid_argument("scaffold mode needs at least one target scaffold");
    for (const auto &t: targets.substructures)
      target_scaffolds.insert(canonical_hash(murcko_scaffold(t)));
  }
  if (mode == TargetMode::fragment && targets.substructures.empty())
    throw std::invalid_argument("fragment mode needs at least one target fragment");

  std::vector<MoleculeEvaluation> out;
  std::set<Digest> seen;
  for (const BondGraph &bg: generated) {
    MoleculeEvaluation e;
    e.valid = is_valid(bg);
    e.atoms = bg.atom_count();
    auto st = atom_stability(bg);
    e.stable_atoms = st.stable_count;
    e.stable = e.atoms > 0 && st.stable_count == e.atoms;
    e.hash = canonical_hash(bg);
    e.scaffold_hash = canonical_hash(murcko_scaffold(bg));
    e.novel = !training_hashes.contains(e.hash);
    if (e.valid) e.unique = seen.insert(e.hash).second;
    switch (mode) {
      case TargetMode::ring: e.desired = targets.ring_counts.contains(ring_count(bg)); break;
      case TargetMode::scaffold: e.desired = target_scaffolds.contains(e.scaffold_hash); break;
      case TargetMode::fragment:
        e.desired = std::any_of(
            targets.substructures.begin(), targets.substructures.end(),
            [&](const BondGraph &t) { return contains_substructure(bg, t); });
        break;
    }
    out.push_back(std::move(e));
  }
  return out;
}

namespace {
double percent(int num, int den) { return den > 0 ? 100.0 * num / den : 0.0; }
}  // namespace

MetricReport compute_metrics(std::span<const BondGraph> generated,
                             const std::set<Digest> &training_hashes,
                             const MetricTargets &targets, TargetMode mode) {
  if (generated.empty()) throw std::invalid_argument("no generated molecules");
  auto evals = evaluate_molecules(generated, training_hashes, targets, mode);
  MetricReport r;
  r.generated = static_cast<int>(evals.size());
  std::set<Digest> generated_scaffolds;
  for (const auto &e: evals) {
    r.valid += e.valid;
    if (e.valid) generated_scaffolds.insert(e.scaffold_hash);
    if (!e.desired) continue;
    ++r.desired;
    r.valid_desired += e.valid;
    r.atoms_desired += e.atoms;
    r.stable_atoms_desired += e.stable_atoms;
    r.stable_desired += e.stable;
    r.novel_valid_desired += e.valid && e.novel;
    r.success += e.valid && e.unique && e.novel;
  }
  if (mode != TargetMode::ring) {
    std::set<Digest> target_scaffolds;
    for (const auto &t: targets.substructures)
      target_scaffolds.insert(canonical_hash(murcko_scaffold(t)));
    r.coverage_defined = true;
    r.target_scaffolds = static_cast<int>(target_scaffolds.size());
    for (const auto &d: target_scaffolds) r.covered_scaffolds += generated_scaffolds.contains(d);
  }
  r.P = percent(r.valid_desired, r.valid);
  r.C = percent(r.covered_scaffolds, r.target_scaffolds);
  r.AS = percent(r.stable_atoms_desired, r.atoms_desired);
  r.MS = percent(r.stable_desired, r.desired);
  r.V = percent(r.valid_desired, r.desired);
  r.N = percent(r.novel_valid_desired, r.valid_desired);
  r.S = percent(r.success, r.generated);
  return r;
}

namespace {
template <class F>
void report_fields(F &&f, auto &r) {
  f("generated", r.generated);
  f("valid", r.valid);
  f("desired", r.desired);
  f("valid_desired", r.valid_desired);
  f("atoms_desired", r.atoms_desired);
  f("stable_atoms_desired", r.stable_atoms_desired);
  f("stable_desired", r.stable_desired);
  f("novel_valid_desired", r.novel_valid_desired);
  f("success", r.success);
  f("target_scaffolds", r.target_scaffolds);
  f("covered_scaffolds", r.covered_scaffolds);
  f("coverage_defined", r.coverage_defined);
  f("P", r.P);
  f("C", r.C);
  f("AS", r.AS);
  f("MS", r.MS);
  f("V", r.V);
  f("N", r.N);
  f("S", r.S);
}
}  // namespace

void write_report(std::ostream &out, const MetricReport &report) {
  auto old = out.precision(17);
  report_fields([&](const char *key, const auto &v) { out << key << "=" << v << "\n"; },
                report);
  out.precision(old);
}

MetricReport read_report(std::istream &in) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("report: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  MetricReport r;
  report_fields(
      [&](const char *key, auto &v) {
        auto it = kv.find(key);
        if (it == kv.end()) throw std::runtime_error(std::string("report: missing ") + key);
        std::istringstream vs(it->second);
        if (!(vs >> v)) throw std::runtime_error(std::string("report: bad value for ") + key);
      },
      r);
  return r;
}

}  // namespace priorgen
