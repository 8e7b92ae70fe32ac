// SPDX-License-Identifier: Apache-2.0
#include "atrl/error.hpp"
#include "atrl/refine.hpp"
#include "doctest.h"

using namespace atrl;

namespace {

Clustering whole(std::size_t n) {
  Clustering c;
  c.k = 1;
  c.assignment.assign(n, 0);
  return c;
}

}  // namespace

TEST_CASE("central count rounds up and keeps at least one node") {
  CHECK(central_count(100, 0.15) == 15);
  CHECK(central_count(7, 0.15) == 2);
  CHECK(central_count(3, 0.15) == 1);
  CHECK(central_count(20, 0.15) == 3);
  CHECK(central_count(10, 0.0) == 0);
  CHECK(central_count(0, 0.5) == 0);
}

TEST_CASE("centroid is the mean of member rows") {
  Matrix m(3, 2);
  m(0, 0) = 1.0;
  m(1, 0) = 3.0;
  m(2, 1) = 9.0;
  const std::vector<std::uint32_t> members{0, 1};
  CHECK(centroid(m, members) == std::vector<double>{2.0, 0.0});
  CHECK_THROWS_AS(centroid(m, std::vector<std::uint32_t>{}), Error);
}

TEST_CASE("denoise attenuates only rows far from their centroid") {
  Matrix m(4, 2);
  m(0, 0) = 1.0;
  m(1, 0) = 1.0;
  m(2, 0) = 1.0;
  m(3, 1) = 1.0;  // orthogonal outlier
  const std::vector<double> phi{0.5, 0.5, 0.5, 0.8};
  const auto out = denoise(m, whole(4), phi, RefineParams{});
  CHECK(out[0] == 0.5);
  CHECK(out[3] == doctest::Approx(0.8 * 0.6));
}

TEST_CASE("denoise is the identity when alpha is one") {
  Matrix m(3, 2);
  m(0, 0) = 1.0;
  m(1, 1) = 1.0;
  m(2, 0) = 0.3;
  RefineParams p;
  p.alpha = 1.0;
  const std::vector<double> phi{0.1, 0.2, 0.3};
  CHECK(denoise(m, whole(3), phi, p) == phi);
}

TEST_CASE("expansion promotes similar important neighbours of central nodes") {
  // Node 0 is the hub; node 1 is similar and important, node 2 is dissimilar.
  Matrix m(3, 2);
  m(0, 0) = 1.0;
  m(1, 0) = 1.0;
  m(1, 1) = 0.1;
  m(2, 0) = 0.2;
  m(2, 1) = 1.0;
  const TokenGraph g(3, {{0, 1, 0.99}, {0, 2, 0.75}});
  const std::vector<double> phi{1.0, 0.6, 0.1};
  RefineParams p;
  p.q = 0.1;  // one central node
  const auto out = expand(g, m, phi, p);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 1.0);
  CHECK(out[2] == 0.1);
}

TEST_CASE("expansion never lowers importance and respects the neighbour limit") {
  std::vector<Edge> edges;
  for (std::uint32_t v = 1; v < 8; ++v) edges.push_back({0, v, 0.9 - 0.01 * v});
  const TokenGraph g(8, std::move(edges));
  Matrix m(8, 1, 1.0);
  std::vector<double> phi(8, 0.9);
  phi[0] = 2.0;
  RefineParams p;
  p.q = 0.01;
  p.r_neighbors = 3;
  const auto out = expand(g, m, phi, p);
  std::size_t promoted = 0;
  for (std::size_t t = 1; t < 8; ++t) {
    CHECK(out[t] >= phi[t]);
    promoted += out[t] == 2.0;
  }
  CHECK(promoted == 3);
  CHECK(out[1] == 2.0);
  CHECK(out[7] == 0.9);
}

TEST_CASE("refine parameter validation") {
  RefineParams p;
  p.alpha = 0.0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = RefineParams{};
  p.q = 1.5;
  CHECK_THROWS_AS(p.validate(), Error);
}
