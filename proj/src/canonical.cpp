//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <array>
#include <cstdio>
#include <memory>
#include <set>
#include <stdexcept>

#include <openssl/evp.h>

#include "priorgen/chem.h"

namespace priorgen {

std::string sha256_hex(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1)
    throw std::runtime_error("sha256 failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

namespace {

using Adjacency = std::vector<std::vector<std::pair<int, int>>>;

/// Colours are dense ranks; refinement replaces each colour by the rank of
/// (colour, sorted neighbour (order, colour) multiset) until stable.
void refine(const Adjacency &adj, std::vector<int> &color) {
  const int n = static_cast<int>(color.size());
  int classes = static_cast<int>(std::set<int>(color.begin(), color.end()).size());
  for (;;) {
    std::vector<std::vector<int>> sig(n);
    for (int v = 0; v < n; ++v) {
      std::vector<std::pair<int, int>> nb;
      for (auto [u, order]: adj[v]) nb.emplace_back(order, color[u]);
      std::sort(nb.begin(), nb.end());
      sig[v].push_back(color[v]);
      for (auto [o, c]: nb) {
        sig[v].push_back(o);
        sig[v].push_back(c);
      }
    }
    std::vector<std::vector<int>> uniq(sig);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    for (int v = 0; v < n; ++v)
      color[v] = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), sig[v]) -
                                  uniq.begin());
    const int now = static_cast<int>(uniq.size());
    if (now == classes) return;
    classes = now;
  }
}

struct Search {
  const BondGraph &bg;
  Adjacency adj;
  std::vector<std::string> labels;
  std::string best;
  std::vector<int> best_order;
  bool have = false;

  std::string certificate(const std::vector<int> &color) const {
    const int n = bg.atom_count();
    std::vector<int> order(n);
    for (int v = 0; v < n; ++v) order[color[v]] = v;
    std::string cert = "n=" + std::to_string(n) + ";";
    for (int k = 0; k < n; ++k) cert += labels[order[k]] + ",";
    std::vector<std::array<int, 3>> edges;
    for (const Bond &b: bg.bonds) {
      int a = color[b.i], c = color[b.j];
      edges.push_back({std::min(a, c), std::max(a, c), b.order});
    }
    std::sort(edges.begin(), edges.end());
    cert += ";";
    for (auto &e: edges)
      cert += std::to_string(e[0]) + "-" + std::to_string(e[1]) + ":" + std::to_string(e[2]) +
              ",";
    return cert;
  }

  void visit(std::vector<int> color) {
    refine(adj, color);
    const int n = bg.atom_count();
    std::vector<int> size(n, 0);
    for (int c: color) ++size[c];
    int cell = -1;
    for (int c = 0; c < n; ++c)
      if (size[c] > 1) {
        cell = c;
        break;
      }
    if (cell < 0) {
      std::string cert = certificate(color);
      if (!have || cert < best) {
        best = std::move(cert);
        best_order.assign(n, 0);
        for (int v = 0; v < n; ++v) best_order[color[v]] = v;
        have = true;
      }
      return;
    }
    // Open twins in the cell are swapped by an automorphism; branch on one.
    std::vector<std::vector<std::pair<int, int>>> tried;
    for (int v = 0; v < n; ++v) {
      if (color[v] != cell) continue;
      auto nb = adj[v];
      std::sort(nb.begin(), nb.end());
      if (std::find(tried.begin(), tried.end(), nb) != tried.end()) continue;
      tried.push_back(std::move(nb));
      std::vector<int> next(n);
      for (int u = 0; u < n; ++u) next[u] = 2 * color[u] + (color[u] == cell && u != v);
      visit(std::move(next));
    }
  }
};

}  // namespace

std::vector<int> canonical_order(const BondGraph &bg) {
  bg.validate();
  Search s{bg, bg.adjacency(), {}, {}, {}, false};
  for (int a = 0; a < bg.atom_count(); ++a)
    s.labels.push_back(bg.elements[a] + "/" + std::to_string(bg.charges[a]));
  std::vector<std::string> uniq(s.labels);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<int> color(bg.atom_count());
  for (int a = 0; a < bg.atom_count(); ++a)
    color[a] =
        static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), s.labels[a]) - uniq.begin());
  s.visit(std::move(color));
  return s.best_order;
}

Digest canonical_hash(const BondGraph &bg) {
  auto order = canonical_order(bg);
  std::vector<int> pos(bg.atom_count());
  for (int k = 0; k < bg.atom_count(); ++k) pos[order[k]] = k;
  std::string cert = "priorgen-graph-v1|" + std::to_string(bg.atom_count()) + "|";
  for (int v: order) cert += bg.elements[v] + "/" + std::to_string(bg.charges[v]) + ",";
  std::vector<std::array<int, 3>> edges;
  for (const Bond &b: bg.bonds)
    edges.push_back({std::min(pos[b.i], pos[b.j]), std::max(pos[b.i], pos[b.j]), b.order});
  std::sort(edges.begin(), edges.end());
  cert += "|";
  for (auto &e: edges)
    cert += std::to_string(e[0]) + "-" + std::to_string(e[1]) + ":" + std::to_string(e[2]) + ",";
  return sha256_hex(cert);
}

const Digest &empty_scaffold_digest() {
  static const Digest d = sha256_hex("priorgen-scaffold|-");
  return d;
}

Digest canonical_hash(const std::optional<BondGraph> &scaffold) {
  return scaffold ? canonical_hash(*scaffold) : empty_scaffold_digest();
}

}  // namespace priorgen
