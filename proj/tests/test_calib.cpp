// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>
#include <random>

#include "atrl/calib.hpp"
#include "atrl/error.hpp"
#include "doctest.h"

using namespace atrl;

namespace {

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("bias curve matches an independently computed golden for T=4") {
  // b_j = 1 + 0.15 e^{-4 j/4} + 0.05 cos(pi j/4), divided by its mean.
  const double golden[4] = {1.0808909480723632, 1.0112752637923028, 0.96351393389134743,
                            0.94431985424398701};
  const auto b = bias_curve(4, BiasParams{});
  REQUIRE(b.size() == 4);
  for (int j = 0; j < 4; ++j) CHECK(b[j] == doctest::Approx(golden[j]).epsilon(1e-14));
}

TEST_CASE("bias curve has unit mean for assorted lengths") {
  for (std::size_t n : {1u, 2u, 7u, 64u, 541u, 4096u}) {
    CHECK(std::abs(mean(bias_curve(n, BiasParams{})) - 1.0) < 1e-12);
  }
  CHECK(bias_curve(1, BiasParams{}) == std::vector<double>{1.0});
}

TEST_CASE("bias curve without correction terms is all ones") {
  BiasParams flat;
  flat.lambda_exp = 0.0;
  flat.lambda_cos = 0.0;
  for (double v : bias_curve(33, flat)) CHECK(v == 1.0);
}

TEST_CASE("bias curve stays above the floor for extreme parameters") {
  BiasParams p;
  p.lambda_exp = 50.0;
  p.gamma = 0.01;
  p.lambda_cos = 40.0;
  const auto b = bias_curve(100, p);
  for (double v : b) CHECK(v >= kBiasFloor);
  BiasParams neg;
  neg.lambda_exp = -0.1;
  CHECK_THROWS_AS(bias_curve(4, neg), Error);
}

TEST_CASE("aggregate averages the top layers and every head") {
  auto t = AttentionTensor::zeros(3, 2, 1, 2);
  // layer 0 should be ignored with top_layers = 2
  t.at(0, 0, 0, 0) = 100.0f;
  t.at(1, 0, 0, 0) = 1.0f;
  t.at(1, 1, 0, 0) = 3.0f;
  t.at(2, 0, 0, 0) = 5.0f;
  t.at(2, 1, 0, 1) = 8.0f;
  const auto a = aggregate(t, 2);
  CHECK(a(0, 0) == doctest::Approx((1.0 + 3.0 + 5.0) / 4.0));
  CHECK(a(0, 1) == doctest::Approx(2.0));
  CHECK(aggregate(t, 3)(0, 0) == doctest::Approx(109.0 / 6.0));
  CHECK_THROWS_AS(aggregate(t, 4), Error);
  CHECK_THROWS_AS(aggregate(t, 0), Error);
}

TEST_CASE("debias divides rows or columns by the curve") {
  Matrix a(2, 3, 1.0);
  const std::vector<double> rows{2.0, 0.5};
  const auto by_row = debias(a, rows, BiasAxis::kGenerated);
  CHECK(by_row(0, 2) == 0.5);
  CHECK(by_row(1, 0) == 2.0);
  const std::vector<double> cols{1.0, 2.0, 4.0};
  const auto by_col = debias(a, cols, BiasAxis::kContext);
  CHECK(by_col(1, 2) == 0.25);
  CHECK_THROWS_AS(debias(a, cols, BiasAxis::kGenerated), Error);
  const std::vector<double> tiny{1.0, 0.0};
  CHECK_THROWS_AS(debias(a, tiny, BiasAxis::kGenerated), Error);
}

TEST_CASE("connectivity sums visual columns") {
  Matrix a(2, 4);
  a(0, 0) = 0.1;
  a(0, 1) = 0.2;
  a(0, 3) = 0.7;
  a(1, 1) = 0.4;
  const std::vector<std::size_t> visual{0, 3};
  const auto c = connectivity(a, visual);
  CHECK(c[0] == doctest::Approx(0.8));
  CHECK(c[1] == 0.0);
  CHECK_THROWS_AS(connectivity(a, std::vector<std::size_t>{}), Error);
  CHECK_THROWS_AS(connectivity(a, std::vector<std::size_t>{4}), Error);
}

TEST_CASE("connectivity of a row-stochastic row is at most its debiased mass") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix a(6, 5);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) s += (a(i, j) = unit(rng));
    for (std::size_t j = 0; j < 5; ++j) a(i, j) /= s;
  }
  const std::vector<std::size_t> all{0, 1, 2, 3, 4};
  for (double c : connectivity(a, all)) CHECK(c == doctest::Approx(1.0));
}
