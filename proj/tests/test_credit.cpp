// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>
#include <random>

#include "atrl/credit.hpp"
#include "atrl/error.hpp"
#include "doctest.h"

using namespace atrl;

namespace {

Clustering clusters(std::vector<std::uint32_t> assignment, std::size_t k) {
  Clustering c;
  c.assignment = std::move(assignment);
  c.k = k;
  return c;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("cluster weights are importance shares") {
  const auto c = clusters({0, 0, 1, 2}, 3);
  const std::vector<double> phi{0.1, 0.3, 0.4, 0.2};
  const auto w = cluster_weights(phi, c);
  CHECK(w[0] == doctest::Approx(0.4));
  CHECK(w[1] == doctest::Approx(0.4));
  CHECK(w[2] == doctest::Approx(0.2));
}

TEST_CASE("zero importance falls back to cluster sizes") {
  const auto w = cluster_weights(std::vector<double>(4, 0.0), clusters({0, 1, 1, 1}, 2));
  CHECK(w == std::vector<double>{0.25, 0.75});
}

TEST_CASE("a single cluster has weight exactly one") {
  const auto w = cluster_weights(std::vector<double>{0.3, 0.9}, clusters({0, 0}, 1));
  CHECK(w == std::vector<double>{1.0});
}

TEST_CASE("cluster weights sum to one for random inputs") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 50;
    const std::size_t k = 1 + trial % std::min<std::size_t>(n, 7);
    std::vector<std::uint32_t> a(n);
    for (std::size_t t = 0; t < n; ++t) a[t] = static_cast<std::uint32_t>(t % k);
    std::vector<double> phi(n);
    for (double& v : phi) v = unit(rng);
    CHECK(std::abs(sum(cluster_weights(phi, clusters(a, k))) - 1.0) < 1e-12);
  }
}

TEST_CASE("group advantage normalises with the population std") {
  const auto a = group_advantage(std::vector<double>{1, 1, -1, -1});
  CHECK(a == std::vector<double>{1, 1, -1, -1});
  const auto b = group_advantage(std::vector<double>{1, -1, -1, -1});
  CHECK(b[0] == doctest::Approx(std::sqrt(3.0)));
  CHECK(b[1] == doctest::Approx(-1.0 / std::sqrt(3.0)));
}

TEST_CASE("degenerate groups get zero advantage") {
  CHECK(group_advantage(std::vector<double>(8, 1.0)) == std::vector<double>(8, 0.0));
  CHECK(group_advantage(std::vector<double>{0.5, 0.5 + 1e-10}) == std::vector<double>(2, 0.0));
  CHECK_THROWS_AS(group_advantage(std::vector<double>{1.0}), Error);
}

TEST_CASE("group advantage has zero mean and unit std") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> r(2 + trial % 30);
    for (double& v : r) v = normal(rng);
    const auto a = group_advantage(r);
    const double n = static_cast<double>(a.size());
    const double m = sum(a) / n;
    double var = 0.0;
    for (double v : a) var += (v - m) * (v - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(std::abs(std::sqrt(var / n) - 1.0) < 1e-9);
  }
}

TEST_CASE("modulate spreads the sequence advantage by cluster weight") {
  const auto c = clusters({1, 0, 1}, 2);
  const std::vector<double> w{0.25, 0.75};
  const auto s = modulate(-2.0, w, c);
  CHECK(s.token_adv == std::vector<double>{-1.5, -0.5, -1.5});
  CHECK(s.mode == WeightingMode::kAtRl);
  CHECK_THROWS_AS(modulate(1.0, std::vector<double>{1.0}, c), Error);
}

TEST_CASE("hard truncation keeps the rounded-up top fraction") {
  CHECK(hard_keep_count(540, 0.15) == 81);
  CHECK(hard_keep_count(7, 0.15) == 2);
  CHECK(hard_keep_count(10, 1.0) == 10);
  CHECK(hard_keep_count(3, 0.01) == 1);

  const std::vector<double> c{0.2, 0.9, 0.5, 0.9, 0.1};
  const auto w = ablation_weights(c, WeightingMode::kHardTopP, 0.4, 0);
  CHECK(w == std::vector<double>{0, 1, 0, 1, 0});
  const auto tie = ablation_weights(c, WeightingMode::kHardTopP, 0.2, 0);
  CHECK(tie == std::vector<double>{0, 1, 0, 0, 0});
  CHECK(ablation_weights(c, WeightingMode::kHardTopP, 1.0, 0) == std::vector<double>(5, 1.0));
  CHECK_THROWS_AS(ablation_weights(c, WeightingMode::kHardTopP, 0.0, 0), Error);
  CHECK_THROWS_AS(ablation_weights(c, WeightingMode::kHardTopP, 1.5, 0), Error);
}

TEST_CASE("uniform, random and reverse ablation weights") {
  const std::vector<double> c{0.2, 0.9, 0.5, 0.4};
  CHECK(ablation_weights(c, WeightingMode::kUniform, 0.15, 0) == std::vector<double>(4, 1.0));

  const auto r1 = ablation_weights(c, WeightingMode::kRandom, 0.15, 42);
  CHECK(r1 == ablation_weights(c, WeightingMode::kRandom, 0.15, 42));
  CHECK(r1 != ablation_weights(c, WeightingMode::kRandom, 0.15, 43));
  for (double v : r1) CHECK((v >= 0.0 && v < 1.0));

  CHECK(reflect(c) == std::vector<double>{0.7, 0.0, 0.4, 0.5});
  const auto cl = clusters({0, 0, 1, 1}, 2);
  const auto rev = ablation_weights(c, WeightingMode::kReverse, 0.15, 0, &cl);
  CHECK(rev[0] == doctest::Approx(0.7 / 1.6));
  CHECK(rev[2] == doctest::Approx(0.9 / 1.6));
  CHECK_THROWS_AS(ablation_weights(c, WeightingMode::kReverse, 0.15, 0), Error);
  CHECK_THROWS_AS(ablation_weights(c, WeightingMode::kAtRl, 0.15, 0), Error);
}

TEST_CASE("mode names round trip") {
  for (auto m : {WeightingMode::kAtRl, WeightingMode::kUniform, WeightingMode::kRandom,
                 WeightingMode::kReverse, WeightingMode::kHardTopP}) {
    CHECK(parse_weighting_mode(to_string(m)) == m);
  }
  CHECK_FALSE(parse_weighting_mode("soft").has_value());
}

TEST_CASE("clipped term follows the pessimistic branch") {
  const SurrogateParams p;
  CHECK(clipped_term(1.0, 2.0, p) == 2.0);
  CHECK(clipped_term(1.5, 1.0, p) == doctest::Approx(1.2));
  CHECK(clipped_term(0.5, 1.0, p) == doctest::Approx(0.5));
  CHECK(clipped_term(0.5, -1.0, p) == doctest::Approx(-0.8));
  CHECK(clipped_term(1.5, -1.0, p) == doctest::Approx(-1.5));
  CHECK_THROWS_AS(clipped_term(0.0, 1.0, p), Error);
}

TEST_CASE("clipped term derivative matches finite differences away from the kinks") {
  const SurrogateParams p;
  const double h = 1e-6;
  for (double lr : {-0.6, -0.3, -0.1, 0.0, 0.1, 0.3, 0.6}) {
    for (double adv : {-1.7, -0.2, 0.4, 2.0}) {
      const double r = std::exp(lr);
      const double num = (clipped_term(std::exp(lr + h), adv, p) - clipped_term(std::exp(lr - h), adv, p)) / (2 * h);
      CHECK(clipped_term_dlogratio(r, adv, p) == doctest::Approx(num).epsilon(1e-6));
    }
  }
}

TEST_CASE("objective averages tokens per sequence, then sequences") {
  const SurrogateParams p;
  AdvantageSignal a1{1.0, {1.0, 3.0}, WeightingMode::kUniform};
  AdvantageSignal a2{-1.0, {-1.0, -1.0, -1.0, -1.0}, WeightingMode::kUniform};
  const std::vector<double> z2(2, -0.5), z4(4, -0.7);
  const std::vector<double> kl2{0.2, 0.4}, kl4{0.1, 0.1, 0.1, 0.1};
  std::vector<SequenceTerms> group{{z2, z2, kl2, &a1}, {z4, z4, kl4, &a2}};
  // ratios are one: mean(1, 3) = 2 and mean(-1 x4) = -1, so 0.5; KL means 0.3 and 0.1
  CHECK(atrl_objective(group, p) == doctest::Approx(0.5 - 0.02 * 0.2));
  SurrogateParams free = p;
  free.beta = 0.0;
  CHECK(atrl_objective(group, free) == doctest::Approx(0.5));
  // sum_t A_t logp_t per sequence: 4 * -0.5 = -2 and -4 * -0.7 = 2.8
  CHECK(reinforce_objective(group) == doctest::Approx(0.4));

  std::vector<double> short_kl{0.1};
  std::vector<SequenceTerms> bad{{z2, z2, short_kl, &a1}};
  CHECK_THROWS_AS(atrl_objective(bad, p), Error);
}
