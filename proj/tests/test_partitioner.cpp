// SPDX-License-Identifier: Apache-2.0
#include <limits>
#include <random>

#include "atrl/error.hpp"
#include "atrl/partitioner.hpp"
#include "doctest.h"

using namespace atrl;

namespace {

TokenGraph random_graph(std::size_t n, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Edge> edges;
  for (std::uint32_t u = 0; u < n; ++u)
    for (std::uint32_t v = u + 1; v < n; ++v)
      if (unit(rng) < density) edges.push_back({u, v, 0.7 + 0.3 * unit(rng)});
  return TokenGraph(n, std::move(edges));
}

// Every balanced two-way split, enumerated.
double brute_force_cut(const TokenGraph& g, double eps_bal) {
  const std::size_t n = g.size();
  const std::size_t cap = max_cluster_size(n, 2, eps_bal);
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::uint32_t> a(n);
  for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
    std::size_t ones = 0;
    for (std::size_t i = 0; i < n; ++i) ones += (a[i] = (mask >> i) & 1u);
    if (ones > cap || n - ones > cap) continue;
    best = std::min(best, edge_cut(g, a));
  }
  return best;
}

}  // namespace

TEST_CASE("cluster count rule") {
  CHECK(cluster_count(1) == 1);
  CHECK(cluster_count(2) == 2);
  CHECK(cluster_count(19) == 2);
  CHECK(cluster_count(30) == 3);
  CHECK(cluster_count(540) == 54);
}

TEST_CASE("balance cap never drops below the ideal size") {
  CHECK(max_cluster_size(10, 2, 0.1) == 5);
  CHECK(max_cluster_size(7, 2, 0.1) == 4);
  CHECK(max_cluster_size(100, 5, 0.1) == 22);
  CHECK(max_cluster_size(100, 5, 0.0) == 20);
  CHECK(max_cluster_size(101, 10, 0.1) == 12);
}

TEST_CASE("two-way partitions match the brute-force optimum on small graphs") {
  std::size_t exact = 0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    const std::size_t n = 4 + s % 9;
    const auto g = random_graph(n, 0.45, s);
    const auto c = partition(g, 2, 0.1, s);
    const double opt = brute_force_cut(g, 0.1);
    CHECK(c.edge_cut <= opt * 1.1 + 1e-9);
    if (c.edge_cut <= opt + 1e-9) ++exact;
  }
  CHECK(exact >= 36);
}

TEST_CASE("partitions respect the cap and use every cluster") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::size_t n = 20 + 17 * s;
    const std::size_t k = cluster_count(n);
    const auto c = partition(random_graph(n, 0.1, 100 + s), k, 0.1, s);
    CHECK(c.balance <= 1.1 + 1e-12);
    for (auto size : c.sizes()) {
      CHECK(size >= 1);
      CHECK(size <= max_cluster_size(n, k, 0.1));
    }
  }
}

TEST_CASE("two cliques joined by one bridge split at the bridge") {
  std::vector<Edge> edges;
  for (std::uint32_t u = 0; u < 6; ++u)
    for (std::uint32_t v = u + 1; v < 6; ++v) {
      edges.push_back({u, v, 0.9});
      edges.push_back({u + 6, v + 6, 0.9});
    }
  edges.push_back({5, 6, 0.75});
  const TokenGraph g(12, std::move(edges));
  const auto c = partition(g, 2, 0.1, 3);
  CHECK(c.edge_cut == doctest::Approx(0.75));
  for (std::size_t t = 1; t < 6; ++t) CHECK(c.assignment[t] == c.assignment[0]);
}

TEST_CASE("edgeless graphs still partition within the cap") {
  const TokenGraph g(23, {});
  const auto c = partition(g, 4, 0.1, 0);
  CHECK(c.edge_cut == 0.0);
  CHECK(c.balance <= 1.1);
}

TEST_CASE("partition is deterministic per seed") {
  const auto g = random_graph(150, 0.08, 77);
  const auto a = partition(g, 15, 0.1, 5);
  const auto b = partition(g, 15, 0.1, 5);
  CHECK(a.assignment == b.assignment);
  CHECK(a.edge_cut == b.edge_cut);
}

TEST_CASE("single cluster and argument errors") {
  const auto g = random_graph(9, 0.3, 1);
  const auto one = partition(g, 1);
  CHECK(one.edge_cut == 0.0);
  CHECK(one.balance == 1.0);
  CHECK_THROWS_AS(partition(g, 0), Error);
  CHECK_THROWS_AS(partition(g, 10), Error);
  CHECK_THROWS_AS(partition(g, 2, -0.1), Error);
  CHECK_THROWS_AS(make_clustering(g, std::vector<std::uint32_t>(9, 0), 2), Error);
  CHECK_THROWS_AS(make_clustering(g, std::vector<std::uint32_t>(8, 0), 1), Error);
}
