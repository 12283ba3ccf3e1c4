//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "priorgen/chem.h"
#include "test_util.h"

namespace priorgen {
namespace {

BondGraph graph(std::vector<std::string> el, std::vector<Bond> bonds) {
  return BondGraph::from_bonds(std::move(el), {}, std::move(bonds));
}

BondGraph ring(int n, const std::string &el = "C", bool alternate = false) {
  std::vector<Bond> b;
  for (int k = 0; k < n; ++k) b.push_back({k, (k + 1) % n, alternate && k % 2 == 0 ? 2 : 1});
  return graph(std::vector<std::string>(n, el), b);
}

BondGraph benzene() { return ring(6, "C", true); }

BondGraph toluene() {
  auto g = benzene();
  g.elements.push_back("C");
  g.charges.push_back(0);
  g.bonds.push_back({0, 6, 1});
  return BondGraph::from_bonds(g.elements, g.charges, g.bonds);
}

BondGraph permuted(const BondGraph &g, const std::vector<int> &perm) {
  // perm[old] = new
  std::vector<std::string> el(g.atom_count());
  std::vector<int> q(g.atom_count());
  for (int a = 0; a < g.atom_count(); ++a) {
    el[perm[a]] = g.elements[a];
    q[perm[a]] = g.charges[a];
  }
  std::vector<Bond> b;
  for (const Bond &x: g.bonds) b.push_back({perm[x.i], perm[x.j], x.order});
  return BondGraph::from_bonds(el, q, b);
}

MolecularPointCloud cloud(std::vector<std::string> el, const Matrix &x) {
  return MolecularPointCloud::from_atoms(el, x, std::vector<int>(el.size(), 0));
}

// Reference lengths (pm) and margins, transcribed independently of the data file.
int lookup_order(double d_angstrom, double single, double dbl = 0, double triple = 0) {
  const double d = d_angstrom * 100;
  if (triple > 0 && d < triple + 5) return 3;
  if (dbl > 0 && d < dbl + 5) return 2;
  if (d < single + 10) return 1;
  return 0;
}

TEST(BondGraph, RejectsBrokenInvariants) {
  EXPECT_THROW(graph({"C", "C"}, {{0, 0, 1}}), std::invalid_argument);
  EXPECT_THROW(graph({"C", "C"}, {{0, 1, 4}}), std::invalid_argument);
  EXPECT_THROW(graph({"C", "C"}, {{0, 1, 1}, {1, 0, 2}}), std::invalid_argument);
  EXPECT_THROW(graph({"C"}, {{0, 3, 1}}), std::invalid_argument);
  auto g = graph({"C", "O"}, {{1, 0, 2}});
  EXPECT_EQ(g.bonds[0], (Bond{0, 1, 2}));
  EXPECT_EQ(g.order_between(1, 0), 2);
}

TEST(InferBonds, TableLookups) {
  auto pair = [](const char *a, const char *b, double d) {
    Matrix x = Matrix::Zero(2, 3);
    x(1, 0) = d;
    auto bg = infer_bonds(cloud({a, b}, x));
    return bg.bonds.empty() ? 0 : bg.bonds[0].order;
  };
  EXPECT_EQ(pair("C", "C", 1.54), 1);
  EXPECT_EQ(pair("O", "H", 0.96), 1);
  EXPECT_EQ(pair("C", "C", 10.0), 0);
  for (double d = 1.0; d < 1.8; d += 0.013) {
    EXPECT_EQ(pair("C", "C", d), lookup_order(d, 154, 134, 120)) << d;
    EXPECT_EQ(pair("C", "N", d), lookup_order(d, 147, 129, 116)) << d;
    EXPECT_EQ(pair("C", "O", d), lookup_order(d, 143, 120, 113)) << d;
    EXPECT_EQ(pair("N", "O", d), lookup_order(d, 140, 121)) << d;
    EXPECT_EQ(pair("F", "C", d), lookup_order(d, 135)) << d;
  }
}

TEST(InferBonds, UnknownPairStaysUnbonded) {
  std::istringstream in("C C 1 1.0 2.0\n");
  auto table = BondTable::parse(in);
  Matrix x = Matrix::Zero(2, 3);
  x(1, 0) = 1.5;
  EXPECT_TRUE(infer_bonds(cloud({"C", "N"}, x), table).bonds.empty());
  EXPECT_EQ(infer_bonds(cloud({"C", "C"}, x), table).bonds.size(), 1u);
}

MolecularPointCloud methane() {
  const double s = 1.09 / std::sqrt(3.0);
  Matrix x(5, 3);
  x << 0, 0, 0, s, s, s, -s, -s, s, -s, s, -s, s, -s, -s;
  return cloud({"C", "H", "H", "H", "H"}, x);
}

MolecularPointCloud water() {
  const double half = 104.5 / 2 * std::numbers::pi / 180;
  Matrix x(3, 3);
  x << 0, 0, 0, 0.96 * std::sin(half), 0.96 * std::cos(half), 0, -0.96 * std::sin(half),
      0.96 * std::cos(half), 0;
  return cloud({"O", "H", "H"}, x);
}

TEST(Stability, SmallMolecules) {
  auto m = infer_bonds(methane());
  EXPECT_EQ(m.bonds.size(), 4u);
  auto st = atom_stability(m);
  EXPECT_EQ(st.stable_count, 5);
  EXPECT_TRUE(molecule_stability(m));
  EXPECT_TRUE(molecule_stability(infer_bonds(water())));

  EXPECT_FALSE(atom_stability(graph({"C"}, {})).stable[0]);
  auto methyl = graph({"C", "H", "H", "H"}, {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}});
  EXPECT_FALSE(molecule_stability(methyl));
  try {
    molecule_stability(BondGraph{});
    FAIL();
  } catch (const std::invalid_argument &e) {
    EXPECT_STREQ(e.what(), "empty");
  }
}

TEST(Stability, ChargeAdjustedValence) {
  auto ammonium = BondGraph::from_bonds({"N", "H", "H", "H", "H"}, {1, 0, 0, 0, 0},
                                        {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}, {0, 4, 1}});
  EXPECT_TRUE(molecule_stability(ammonium));
  auto neutral = ammonium;
  neutral.charges[0] = 0;
  EXPECT_FALSE(molecule_stability(neutral));
  auto hydroxide = BondGraph::from_bonds({"O", "H"}, {-1, 0}, {{0, 1, 1}});
  EXPECT_TRUE(molecule_stability(hydroxide));
}

TEST(Validity, ProxyRule) {
  EXPECT_TRUE(is_valid(infer_bonds(methane())));
  EXPECT_FALSE(is_valid(graph({"C", "C", "C", "C"}, {{0, 1, 1}, {2, 3, 1}})));
  EXPECT_FALSE(is_valid(
      graph({"C", "C", "C", "C", "C", "C"}, {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}, {0, 4, 1}, {0, 5, 1}})));
  EXPECT_FALSE(is_valid(graph({"C"}, {})));
  EXPECT_TRUE(is_valid(benzene()));
}

TEST(RingCount, Examples) {
  EXPECT_EQ(ring_count(graph({"C", "C", "C"}, {{0, 1, 1}, {1, 2, 1}})), 0);
  EXPECT_EQ(ring_count(benzene()), 1);
  std::vector<Bond> naph;
  for (int k = 0; k < 6; ++k) naph.push_back({k, (k + 1) % 6, 1});
  naph.insert(naph.end(), {{0, 6, 1}, {6, 7, 1}, {7, 8, 1}, {8, 9, 1}, {9, 5, 1}});
  auto g = graph(std::vector<std::string>(10, "C"), naph);
  EXPECT_EQ(g.bond_count(), 11);
  EXPECT_EQ(ring_count(g), 2);
}

// Cycle-space dimension |E| - rank over GF(2) of the edge-vertex incidence rows.
int cycle_space_dimension(int n, const std::vector<std::pair<int, int>> &edges) {
  std::vector<unsigned> basis(n, 0);
  int rank = 0;
  for (auto [a, b]: edges) {
    unsigned row = (1u << a) | (1u << b);
    for (int bit = n - 1; bit >= 0 && row; --bit) {
      if (!(row >> bit & 1u)) continue;
      if (!basis[bit]) {
        basis[bit] = row;
        ++rank;
        row = 0;
      } else {
        row ^= basis[bit];
      }
    }
  }
  return static_cast<int>(edges.size()) - rank;
}

bool connected_mask(int n, const std::vector<unsigned> &adj) {
  unsigned seen = 1, frontier = 1;
  while (frontier) {
    unsigned next = 0;
    for (int v = 0; v < n; ++v)
      if (frontier >> v & 1u) next |= adj[v];
    frontier = next & ~seen;
    seen |= next;
  }
  return seen == (1u << n) - 1;
}

TEST(RingCount, MatchesCycleSpaceOnAllSmallConnectedGraphs) {
  // All labelled graphs up to 7 nodes; for 8 nodes one labelling per
  // isomorphism class is kept by requiring non-increasing degrees.
  long checked = 0;
  for (int n = 1; n <= 8; ++n) {
    std::vector<std::pair<int, int>> slots;
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) slots.emplace_back(a, b);
    const int m = static_cast<int>(slots.size());
    // Packed 4-bit degree counters, split into low and high halves of the mask.
    const int lo_bits = m / 2, hi_bits = m - lo_bits;
    std::vector<std::uint32_t> lo(1u << lo_bits, 0), hi(1u << hi_bits, 0);
    for (std::uint32_t s = 0; s < lo.size(); ++s)
      for (int k = 0; k < lo_bits; ++k)
        if (s >> k & 1u) lo[s] += (1u << 4 * slots[k].first) + (1u << 4 * slots[k].second);
    for (std::uint32_t s = 0; s < hi.size(); ++s)
      for (int k = 0; k < hi_bits; ++k)
        if (s >> k & 1u)
          hi[s] += (1u << 4 * slots[lo_bits + k].first) + (1u << 4 * slots[lo_bits + k].second);
    for (std::uint64_t mask = 0; mask < (1ull << m); ++mask) {
      if (n == 8) {
        std::uint32_t deg = lo[mask & ((1u << lo_bits) - 1)] + hi[mask >> lo_bits];
        bool sorted = true;
        for (int v = 1; v < n && sorted; ++v)
          sorted = (deg >> 4 * (v - 1) & 15u) >= (deg >> 4 * v & 15u);
        if (!sorted) continue;
      }
      std::vector<unsigned> adj(n, 0);
      std::vector<std::pair<int, int>> edges;
      for (int k = 0; k < m; ++k)
        if (mask >> k & 1u) {
          edges.push_back(slots[k]);
          adj[slots[k].first] |= 1u << slots[k].second;
          adj[slots[k].second] |= 1u << slots[k].first;
        }
      if (!connected_mask(n, adj)) continue;
      std::vector<Bond> bonds;
      for (auto [a, b]: edges) bonds.push_back({a, b, 1});
      BondGraph g{std::vector<std::string>(n, "C"), std::vector<int>(n, 0), bonds};
      ASSERT_EQ(ring_count(g), cycle_space_dimension(n, edges)) << "n=" << n << " mask=" << mask;
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000000);
}

TEST(RingAtoms, BridgesAreNotRingBonds) {
  auto t = toluene();
  auto on = ring_atoms(t);
  for (int a = 0; a < 6; ++a) EXPECT_TRUE(on[a]);
  EXPECT_FALSE(on[6]);
  // Two triangles joined by a bridge.
  auto g = graph(std::vector<std::string>(6, "C"),
                 {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}, {2, 3, 1}, {3, 4, 1}, {4, 5, 1}, {3, 5, 1}});
  auto r = ring_atoms(g);
  EXPECT_EQ(std::count(r.begin(), r.end(), true), 6);
}

TEST(Murcko, Examples) {
  EXPECT_FALSE(murcko_scaffold(graph({"C", "C", "C"}, {{0, 1, 1}, {1, 2, 1}})).has_value());
  auto s = murcko_scaffold(toluene());
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(*s, benzene());
  EXPECT_EQ(murcko_scaffold_atoms(toluene()), (std::vector<int>{0, 1, 2, 3, 4, 5}));

  // Two benzenes joined by an ethylene bridge, each carrying a methyl.
  std::vector<Bond> b;
  for (int k = 0; k < 6; ++k) {
    b.push_back({k, (k + 1) % 6, k % 2 ? 1 : 2});
    b.push_back({6 + k, 6 + (k + 1) % 6, k % 2 ? 1 : 2});
  }
  b.insert(b.end(), {{0, 12, 1}, {12, 13, 1}, {13, 6, 1}, {3, 14, 1}, {9, 15, 1}});
  auto bridged = graph(std::vector<std::string>(16, "C"), b);
  auto keep = murcko_scaffold_atoms(bridged);
  EXPECT_EQ(keep.size(), 14u);
  EXPECT_EQ(std::count(keep.begin(), keep.end(), 14), 0);
  EXPECT_EQ(ring_count(*murcko_scaffold(bridged)), 2);
}

/// Random connected graph: a random tree plus extra edges.
BondGraph random_graph(Rng &rng, int n, int extra, const std::vector<std::string> &labels,
                       int max_order = 2) {
  std::uniform_int_distribution<int> lab(0, static_cast<int>(labels.size()) - 1);
  std::uniform_int_distribution<int> ord(1, max_order);
  std::vector<std::string> el;
  for (int a = 0; a < n; ++a) el.push_back(labels[lab(rng)]);
  std::map<std::pair<int, int>, int> edges;
  for (int a = 1; a < n; ++a) {
    int p = std::uniform_int_distribution<int>(0, a - 1)(rng);
    edges[{p, a}] = ord(rng);
  }
  std::uniform_int_distribution<int> pick(0, std::max(n - 1, 0));
  for (int k = 0; k < extra && n > 1; ++k) {
    int a = pick(rng), b = pick(rng);
    if (a != b) edges[std::minmax(a, b)] = ord(rng);
  }
  std::vector<Bond> bonds;
  for (auto [k, o]: edges) bonds.push_back({k.first, k.second, o});
  return graph(el, bonds);
}

std::vector<int> random_perm(Rng &rng, int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

TEST(Murcko, Idempotent) {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    auto g = random_graph(rng, 1 + trial % 14, trial % 4, {"C", "N", "O"});
    auto s = murcko_scaffold(g);
    if (!s) {
      EXPECT_EQ(ring_count(g), 0);
      continue;
    }
    auto again = murcko_scaffold(*s);
    ASSERT_TRUE(again.has_value());
    EXPECT_EQ(*again, *s);
    EXPECT_EQ(ring_count(*s), ring_count(g));
  }
}

/// Brute-force isomorphism: backtracking over all label-preserving bijections.
bool isomorphic(const BondGraph &a, const BondGraph &b) {
  const int n = a.atom_count();
  if (n != b.atom_count() || a.bond_count() != b.bond_count()) return false;
  std::vector<int> map(n, -1);
  std::vector<bool> used(n, false);
  std::function<bool(int)> go = [&](int v) {
    if (v == n) return true;
    for (int w = 0; w < n; ++w) {
      if (used[w] || a.elements[v] != b.elements[w] || a.charges[v] != b.charges[w]) continue;
      bool ok = true;
      for (int u = 0; u < v && ok; ++u) ok = a.order_between(u, v) == b.order_between(map[u], w);
      if (!ok) continue;
      map[v] = w;
      used[w] = true;
      if (go(v + 1)) return true;
      used[w] = false;
    }
    return false;
  };
  return go(0);
}

TEST(CanonicalHash, Examples) {
  EXPECT_EQ(canonical_hash(benzene()), canonical_hash(benzene()));
  auto pyridine = benzene();
  pyridine.elements[0] = "N";
  EXPECT_NE(canonical_hash(benzene()), canonical_hash(pyridine));
  EXPECT_EQ(canonical_hash(std::optional<BondGraph>{}), empty_scaffold_digest());
  EXPECT_NE(canonical_hash(BondGraph{}), empty_scaffold_digest());
  EXPECT_EQ(canonical_hash(benzene()).size(), 64u);
  auto charged = benzene();
  charged.charges[2] = 1;
  EXPECT_NE(canonical_hash(charged), canonical_hash(benzene()));
}

TEST(CanonicalHash, SeparatesRegularGraphs) {
  auto cube = graph(std::vector<std::string>(8, "C"),
                    {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {0, 3, 1}, {4, 5, 1}, {5, 6, 1},
                     {6, 7, 1}, {4, 7, 1}, {0, 4, 1}, {1, 5, 1}, {2, 6, 1}, {3, 7, 1}});
  std::vector<Bond> w;
  for (int k = 0; k < 8; ++k) w.push_back({k, (k + 1) % 8, 1});
  for (int k = 0; k < 4; ++k) w.push_back({k, k + 4, 1});
  auto wagner = graph(std::vector<std::string>(8, "C"), w);
  ASSERT_FALSE(isomorphic(cube, wagner));
  EXPECT_NE(canonical_hash(cube), canonical_hash(wagner));

  auto two_triangles = graph(std::vector<std::string>(6, "C"),
                             {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}, {3, 4, 1}, {4, 5, 1}, {3, 5, 1}});
  EXPECT_NE(canonical_hash(ring(6)), canonical_hash(two_triangles));
  Rng rng(2);
  for (int k = 0; k < 20; ++k)
    EXPECT_EQ(canonical_hash(permuted(cube, random_perm(rng, 8))), canonical_hash(cube));
}

TEST(CanonicalHash, InvariantUnderRelabelling) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 9;
    auto g = random_graph(rng, n, trial % 5, {"C", "N", "O", "H"}, 3);
    auto p = permuted(g, random_perm(rng, n));
    ASSERT_EQ(canonical_hash(g), canonical_hash(p)) << trial;
    auto order = canonical_order(g);
    EXPECT_EQ(g.induced(order), p.induced(canonical_order(p)));
  }
}

TEST(CanonicalHash, CollisionFreeAgainstIsomorphismOracle) {
  Rng rng(4);
  std::vector<BondGraph> corpus;
  for (int k = 0; k < 10000; ++k) {
    const int n = 1 + k % 9;
    corpus.push_back(random_graph(rng, n, k % 4, {"C", "N"}, 1 + k % 2));
  }
  std::map<Digest, std::vector<int>> by_hash;
  for (int k = 0; k < static_cast<int>(corpus.size()); ++k)
    by_hash[canonical_hash(corpus[k])].push_back(k);
  // Equal digest implies isomorphic.
  for (const auto &[d, members]: by_hash)
    for (int k: members) ASSERT_TRUE(isomorphic(corpus[members[0]], corpus[k])) << d;
  // Distinct digests with matching coarse invariants must be non-isomorphic.
  auto invariant = [](const BondGraph &g) {
    auto deg = g.degrees();
    auto el = g.elements;
    std::sort(deg.begin(), deg.end());
    std::sort(el.begin(), el.end());
    std::vector<int> orders;
    for (const Bond &b: g.bonds) orders.push_back(b.order);
    std::sort(orders.begin(), orders.end());
    return std::tuple(deg, el, orders);
  };
  std::map<decltype(invariant(corpus[0])), std::vector<int>> groups;
  for (const auto &[d, members]: by_hash) groups[invariant(corpus[members[0]])].push_back(members[0]);
  long pairs = 0;
  for (const auto &[inv, reps]: groups)
    for (std::size_t i = 0; i < reps.size(); ++i)
      for (std::size_t j = i + 1; j < reps.size(); ++j) {
        ASSERT_FALSE(isomorphic(corpus[reps[i]], corpus[reps[j]]));
        ++pairs;
      }
  EXPECT_GT(pairs, 100);
  EXPECT_LT(by_hash.size(), corpus.size());
}

TEST(Substructure, Examples) {
  EXPECT_TRUE(contains_substructure(toluene(), benzene()));
  EXPECT_FALSE(contains_substructure(ring(6), benzene()));
  EXPECT_TRUE(contains_substructure(benzene(), benzene()));
  EXPECT_FALSE(contains_substructure(benzene(), toluene()));
  auto big = ring(13);
  try {
    contains_substructure(big, big);
    FAIL();
  } catch (const std::invalid_argument &e) {
    EXPECT_NE(std::string(e.what()).find("murcko_scaffold"), std::string::npos);
  }
  // A path is a subgraph of a ring but not an induced one when it closes it.
  auto path = graph({"C", "C", "C"}, {{0, 1, 1}, {1, 2, 1}});
  auto triangle = ring(3);
  EXPECT_TRUE(contains_substructure(triangle, path));
  EXPECT_FALSE(contains_substructure(triangle, path, true));
}

TEST(Substructure, InducedSubgraphsAreFound) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + trial % 14;
    auto g = random_graph(rng, n, trial % 5, {"C", "N", "O"}, 2);
    auto pick = random_perm(rng, n);
    pick.resize(1 + trial % std::min(n, kMaxSubstructureAtoms));
    auto sub = g.induced(pick);
    auto shuffled = permuted(sub, random_perm(rng, sub.atom_count()));
    EXPECT_TRUE(contains_substructure(g, shuffled, true));
    EXPECT_TRUE(contains_substructure(shuffled, shuffled));
  }
}

// Graphs standing in for generated molecules in metric fixtures.
BondGraph chain(int n, const std::string &el = "C") {
  std::vector<Bond> b;
  for (int k = 0; k + 1 < n; ++k) b.push_back({k, k + 1, 1});
  return graph(std::vector<std::string>(n, el), b);
}

BondGraph disconnected() { return graph({"C", "C"}, {}); }

TEST(Metrics, SuccessRateByEnumeration) {
  // Flags (valid, unique, novel, on-target): TTTT, TTFT, TFTT, FTTT.
  auto novel = chain(4);
  auto known = chain(5);
  std::vector<BondGraph> gen = {novel, known, novel, disconnected()};
  std::set<Digest> training = {canonical_hash(known)};
  MetricTargets targets{{0}, {}};
  auto evals = evaluate_molecules(gen, training, targets, TargetMode::ring);
  EXPECT_TRUE(evals[0].valid && evals[0].unique && evals[0].novel && evals[0].desired);
  EXPECT_TRUE(evals[1].valid && evals[1].unique && !evals[1].novel && evals[1].desired);
  EXPECT_TRUE(evals[2].valid && !evals[2].unique && evals[2].novel && evals[2].desired);
  EXPECT_TRUE(!evals[3].valid && evals[3].novel && evals[3].desired);
  auto r = compute_metrics(gen, training, targets, TargetMode::ring);
  EXPECT_DOUBLE_EQ(r.S, 25.0);
}

TEST(Metrics, SaturatedCase) {
  std::vector<BondGraph> gen;
  for (int k = 2; k < 12; ++k) gen.push_back(chain(k));
  auto r = compute_metrics(gen, {}, MetricTargets{{0}, {}}, TargetMode::ring);
  EXPECT_DOUBLE_EQ(r.P, 100.0);
  EXPECT_DOUBLE_EQ(r.V, 100.0);
  EXPECT_DOUBLE_EQ(r.N, 100.0);
  EXPECT_DOUBLE_EQ(r.S, 100.0);
  EXPECT_FALSE(r.coverage_defined);
}

TEST(Metrics, CoverageRatio) {
  // Generated scaffolds {A, B}; targets {A, B, C, D}.
  std::vector<BondGraph> targets = {ring(3), ring(4), ring(5), ring(6)};
  std::vector<BondGraph> gen = {ring(3), ring(3), ring(4)};
  auto r = compute_metrics(gen, {}, MetricTargets{{}, targets}, TargetMode::scaffold);
  EXPECT_DOUBLE_EQ(r.C, 50.0);
  EXPECT_EQ(r.covered_scaffolds, 2);
  EXPECT_THROW(compute_metrics(gen, {}, MetricTargets{}, TargetMode::scaffold),
               std::invalid_argument);
  EXPECT_THROW(compute_metrics({}, {}, MetricTargets{{0}, {}}, TargetMode::ring),
               std::invalid_argument);
}

TEST(Metrics, TenMoleculeFixture) {
  // Ring mode, target ring counts {1}.
  auto methylcyclo = [](int n) {
    auto g = ring(n);
    g.elements.push_back("C");
    g.charges.push_back(0);
    g.bonds.push_back({0, n, 1});
    return BondGraph::from_bonds(g.elements, g.charges, g.bonds);
  };
  auto fused = graph(std::vector<std::string>(4, "C"),
                     {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {0, 3, 1}, {0, 2, 1}});
  auto broken_ring = ring(5);
  broken_ring.elements.push_back("C");
  broken_ring.charges.push_back(0);
  auto hydrogens = BondGraph::from_bonds({"C", "C", "C", "H", "H", "H", "H", "H", "H"}, {},
                                         {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}, {0, 3, 1}, {0, 4, 1},
                                          {1, 5, 1}, {1, 6, 1}, {2, 7, 1}, {2, 8, 1}});
  std::vector<BondGraph> gen = {
      ring(3),          // 0 valid desired novel unique
      ring(4),          // 1 valid desired, in training
      ring(3),          // 2 valid desired duplicate of 0
      methylcyclo(5),   // 3 valid desired novel
      broken_ring,      // 4 invalid (isolated atom) but ring count 1 -> desired
      fused,            // 5 valid, 2 rings, not desired
      chain(4),         // 6 valid, 0 rings, not desired
      hydrogens,        // 7 valid desired, fully stable (cyclopropane)
      ring(6, "N"),     // 8 valid desired novel
      disconnected(),   // 9 invalid, 0 rings
  };
  std::set<Digest> training = {canonical_hash(ring(4))};
  auto r = compute_metrics(gen, training, MetricTargets{{1}, {}}, TargetMode::ring);
  EXPECT_EQ(r.generated, 10);
  EXPECT_EQ(r.valid, 8);
  EXPECT_EQ(r.desired, 7);
  EXPECT_EQ(r.valid_desired, 6);
  EXPECT_DOUBLE_EQ(r.P, 100.0 * 6 / 8);
  EXPECT_DOUBLE_EQ(r.V, 100.0 * 6 / 7);
  EXPECT_DOUBLE_EQ(r.N, 100.0 * 5 / 6);
  // Success: 0, 3, 7, 8.
  EXPECT_DOUBLE_EQ(r.S, 40.0);
  EXPECT_EQ(r.stable_desired, 1);
  EXPECT_DOUBLE_EQ(r.MS, 100.0 / 7);
  // Stable atoms among desired: only the cyclopropane's nine.
  const int atoms = 3 + 4 + 3 + 6 + 6 + 9 + 6;
  EXPECT_EQ(r.atoms_desired, atoms);
  EXPECT_DOUBLE_EQ(r.AS, 100.0 * 9 / atoms);
}

TEST(Metrics, FragmentModeUsesContainment) {
  std::vector<BondGraph> gen = {toluene(), ring(6), chain(3)};
  auto r = compute_metrics(gen, {}, MetricTargets{{}, {benzene()}}, TargetMode::fragment);
  EXPECT_EQ(r.desired, 1);
  EXPECT_DOUBLE_EQ(r.S, 100.0 / 3);
}

TEST(Metrics, ReportRoundTrip) {
  std::vector<BondGraph> gen = {ring(3), ring(4), chain(3)};
  auto r = compute_metrics(gen, {}, MetricTargets{{}, {ring(3), ring(5)}}, TargetMode::scaffold);
  std::stringstream io;
  write_report(io, r);
  EXPECT_EQ(read_report(io), r);
  std::istringstream bad("P=1\n");
  EXPECT_THROW(read_report(bad), std::runtime_error);
}

}  // namespace
}  // namespace priorgen
