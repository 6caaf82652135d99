#pragma once

// Reference implementations used as test oracles. They intentionally avoid
// the library's algorithms: closures by repeated parent following, partitions
// by union-find, entropies from joint counts, matchings by exhaustive search.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "convstruct/graph.hpp"

namespace oracle {

using convstruct::Index;
using convstruct::ReplyGraph;
using Partition = std::vector<std::vector<Index>>;

// Repeatedly follow parent links until nothing new is reached.
inline std::set<Index> ancestor_closure(const ReplyGraph& g, Index node) {
  std::set<Index> seen;
  std::vector<Index> frontier{node};
  while (!frontier.empty()) {
    std::vector<Index> next;
    for (Index x : frontier) {
      if (x >= g.size()) continue;
      for (Index p : g.parents(x)) {
        if (p == x || p == node) continue;
        if (seen.insert(p).second) next.push_back(p);
      }
    }
    frontier = std::move(next);
  }
  return seen;
}

// Cell-by-cell mask straight from the four rules: target column, diagonal,
// ancestors of history rows, nothing else.
inline std::vector<std::vector<int>> ancestor_mask(const ReplyGraph& prefix,
                                                   std::size_t L) {
  std::vector<std::vector<int>> m(L, std::vector<int>(L, 0));
  for (Index i = 0; i < L; ++i) {
    m[i][L - 1] = 1;
    m[i][i] = 1;
    if (i + 1 == L) continue;
    const auto anc = ancestor_closure(prefix, i);
    for (Index j : anc) m[i][j] = 1;
  }
  return m;
}

// Upward path length by walking single parents (tree mode).
inline int distance(const ReplyGraph& g, Index from, Index to) {
  int d = 0;
  Index at = from;
  while (at != to) {
    if (at >= g.size() || g.parents(at).empty()) return -1;
    at = g.parents(at).front();
    ++d;
    if (d > static_cast<int>(g.size())) return -1;
  }
  return d;
}

struct UnionFind {
  std::vector<Index> up;
  explicit UnionFind(std::size_t n) : up(n) { std::iota(up.begin(), up.end(), Index{0}); }
  Index find(Index x) {
    while (up[x] != x) x = up[x] = up[up[x]];
    return x;
  }
  void unite(Index a, Index b) { up[find(a)] = find(b); }
};

inline Partition components(const ReplyGraph& g, std::size_t n) {
  UnionFind uf(n);
  for (Index i = 0; i < n && i < g.size(); ++i) {
    for (Index p : g.parents(i)) {
      if (p != i) uf.unite(i, p);
    }
  }
  std::map<Index, std::vector<Index>> groups;
  for (Index i = 0; i < n; ++i) groups[uf.find(i)].push_back(i);
  Partition out;
  for (auto& [root, members] : groups) out.push_back(members);
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<int> labels(const Partition& p, std::size_t n) {
  std::vector<int> lab(n, -1);
  for (std::size_t c = 0; c < p.size(); ++c) {
    for (Index x : p[c]) lab[x] = static_cast<int>(c);
  }
  return lab;
}

// VI from the joint contingency table, natural log.
inline double vi(const Partition& a, const Partition& b, std::size_t n) {
  const auto la = labels(a, n), lb = labels(b, n);
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pa, pb;
  for (std::size_t i = 0; i < n; ++i) {
    joint[{la[i], lb[i]}] += 1.0 / n;
    pa[la[i]] += 1.0 / n;
    pb[lb[i]] += 1.0 / n;
  }
  double h_a_given_b = 0.0, h_b_given_a = 0.0;
  for (const auto& [key, pij] : joint) {
    h_a_given_b -= pij * std::log(pij / pb[key.second]);
    h_b_given_a -= pij * std::log(pij / pa[key.first]);
  }
  return h_a_given_b + h_b_given_a;
}

inline double scaled_vi(const Partition& a, const Partition& b, std::size_t n) {
  if (n <= 1) return 100.0;
  return 100.0 * (1.0 - vi(a, b, n) / std::log(static_cast<double>(n)));
}

// Best one-to-one cluster overlap by trying every injective assignment of the
// smaller side into the larger one.
inline double one_to_one(const Partition& a, const Partition& b, std::size_t n) {
  const Partition& small = a.size() <= b.size() ? a : b;
  const Partition& large = a.size() <= b.size() ? b : a;
  std::vector<std::vector<int>> overlap(small.size(),
                                        std::vector<int>(large.size(), 0));
  const auto lab = labels(large, n);
  for (std::size_t i = 0; i < small.size(); ++i) {
    for (Index x : small[i]) ++overlap[i][lab[x]];
  }
  std::vector<std::size_t> perm(large.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  int best = 0;
  do {
    int total = 0;
    for (std::size_t i = 0; i < small.size(); ++i) total += overlap[i][perm[i]];
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return 100.0 * best / static_cast<double>(n);
}

// Same quantity via subset dynamic programming; usable when exhaustive
// permutations get too slow.
inline double one_to_one_dp(const Partition& a, const Partition& b, std::size_t n) {
  const auto lb = labels(b, n);
  std::vector<std::vector<int>> overlap(a.size(), std::vector<int>(b.size(), 0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (Index x : a[i]) ++overlap[i][lb[x]];
  }
  const std::size_t states = std::size_t{1} << b.size();
  std::vector<int> dp(states, -1);
  dp[0] = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::vector<int> next = dp;  // row i left unmatched
    for (std::size_t s = 0; s < states; ++s) {
      if (dp[s] < 0) continue;
      for (std::size_t j = 0; j < b.size(); ++j) {
        if (s & (std::size_t{1} << j)) continue;
        const std::size_t t = s | (std::size_t{1} << j);
        next[t] = std::max(next[t], dp[s] + overlap[i][j]);
      }
    }
    dp = std::move(next);
  }
  return 100.0 * *std::max_element(dp.begin(), dp.end()) / static_cast<double>(n);
}

// Every set partition of {0..n-1} via restricted growth strings.
inline std::vector<Partition> all_partitions(std::size_t n) {
  std::vector<Partition> out;
  std::vector<int> rgs(n, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int max_label) {
    if (i == n) {
      Partition p(static_cast<std::size_t>(max_label + 1));
      for (std::size_t k = 0; k < n; ++k) p[rgs[k]].push_back(k);
      out.push_back(std::move(p));
      return;
    }
    for (int l = 0; l <= max_label + 1; ++l) {
      rgs[i] = l;
      rec(i + 1, std::max(max_label, l));
    }
  };
  if (n == 0) return {Partition{}};
  rec(0, -1);
  return out;
}

// Uniform random recursive tree on n nodes rooted at 0.
template <typename Rng>
ReplyGraph random_tree(std::size_t n, Rng& rng) {
  ReplyGraph g(n);
  for (Index i = 1; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    g.set_parents(i, {pick(rng)});
  }
  return g;
}

}  // namespace oracle
