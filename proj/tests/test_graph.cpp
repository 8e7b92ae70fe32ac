// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>
#include <sstream>

#include "atrl/error.hpp"
#include "atrl/token_graph.hpp"
#include "doctest.h"

using namespace atrl;

namespace {

Matrix random_rows(std::size_t t, std::size_t s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix m(t, s);
  for (double& v : m.data()) v = unit(rng);
  return m;
}

double naive_cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("graph edges are exactly the pairs above the threshold") {
  const auto m = random_rows(40, 6, 11);
  const auto g = build_graph(m, 0.8);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = i + 1; j < 40; ++j)
      if (naive_cosine(m.row(i), m.row(j)) > 0.8) ++expected;
  CHECK(g.edges().size() == expected);
  for (const auto& e : g.edges()) {
    CHECK(e.u < e.v);
    CHECK(e.w == doctest::Approx(naive_cosine(m.row(e.u), m.row(e.v))).epsilon(1e-12));
    CHECK(e.w > 0.8);
  }
}

TEST_CASE("identical rows connect with weight one and zero rows stay isolated") {
  Matrix m(3, 2);
  m(0, 0) = 1.0;
  m(1, 0) = 3.0;
  const auto g = build_graph(m, 0.7);
  REQUIRE(g.edges().size() == 1);
  CHECK(g.edges()[0].w == doctest::Approx(1.0));
  CHECK(g.neighbors(2).empty());
  CHECK(footprint_similarity(m, 0, 2) == 0.0);
}

TEST_CASE("orthogonal rows have no edge") {
  Matrix m(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = 1.0;
  CHECK(build_graph(m, 0.0).edges().empty());
}

TEST_CASE("adjacency lists mirror the edge list and degrees add up") {
  const auto g = build_graph(random_rows(25, 4, 5), 0.85);
  double twice = 0.0;
  for (std::size_t t = 0; t < g.size(); ++t) {
    double deg = 0.0;
    for (const auto& nb : g.neighbors(t)) deg += nb.w;
    CHECK(g.weighted_degree(t) == doctest::Approx(deg));
    twice += deg;
  }
  CHECK(twice == doctest::Approx(2.0 * g.total_weight()));
}

TEST_CASE("graph constructor validates edges") {
  CHECK_THROWS_AS(TokenGraph(3, {{0, 0, 0.9}}), Error);
  CHECK_THROWS_AS(TokenGraph(3, {{0, 5, 0.9}}), Error);
  CHECK_THROWS_AS(TokenGraph(3, {{0, 1, 0.9}, {0, 1, 0.8}}), Error);
  CHECK_THROWS_AS(TokenGraph(3, {{0, 1, 0.5}}, 0.7), Error);
  CHECK_THROWS_AS(build_graph(Matrix(2, 2), 1.0), Error);
}

TEST_CASE("adjacency text round trip keeps nine significant digits") {
  const auto g = build_graph(random_rows(30, 5, 9), 0.75);
  std::stringstream ss;
  write_adjacency(g, ss);
  const auto back = read_adjacency(ss);
  REQUIRE(back.size() == g.size());
  REQUIRE(back.edges().size() == g.edges().size());
  for (std::size_t k = 0; k < g.edges().size(); ++k) {
    CHECK(back.edges()[k].u == g.edges()[k].u);
    CHECK(back.edges()[k].w == doctest::Approx(g.edges()[k].w).epsilon(1e-8));
  }
  std::stringstream again;
  write_adjacency(back, again);
  std::stringstream first;
  write_adjacency(g, first);
  CHECK(again.str() == first.str());

  std::stringstream bad("3\n0 1 0.9\n1 7 0.8\n");
  CHECK_THROWS_AS(read_adjacency(bad), Error);
  std::stringstream junk("3\n0 1 zz\n");
  CHECK_THROWS_AS(read_adjacency(junk), Error);
}
