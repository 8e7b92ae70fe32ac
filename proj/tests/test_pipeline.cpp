// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include "atrl/config.hpp"
#include "atrl/fixture.hpp"
#include "atrl/pipeline.hpp"
#include "atrl/report.hpp"
#include "doctest.h"

using namespace atrl;

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("pipeline weights sum to one and follow the clustering") {
  const auto tensor = make_topic_attention(2, 4, 120, 48, 6, 1);
  const auto meta = make_meta(48, 16);
  const auto r = run_credit_pipeline(tensor, meta.visual_indices(), PipelineConfig{});
  CHECK(r.clustering.k == 12);
  CHECK(std::abs(sum(r.cluster_weight) - 1.0) < 1e-12);
  for (std::size_t t = 0; t < 120; ++t) {
    CHECK(r.token_weight[t] == r.cluster_weight[r.clustering.assignment[t]]);
    CHECK(r.phi[t] >= 0.0);
  }
  CHECK(r.timings.total() > 0.0);
}

TEST_CASE("one cluster reduces every mode-agnostic advantage to the sequence advantage") {
  const auto tensor = make_topic_attention(1, 2, 40, 20, 3, 2);
  const auto visual = make_meta(20, 8).visual_indices();
  PipelineConfig one;
  one.k = 1;
  const auto r = run_credit_pipeline(tensor, visual, one);
  const auto atrl = apply_credit(r, -1.25, WeightingMode::kAtRl);
  for (double a : atrl.token_adv) CHECK(a == -1.25);
}

TEST_CASE("uniform mode ignores connectivity") {
  const auto tensor = make_topic_attention(1, 2, 30, 20, 3, 3);
  PipelineConfig cfg;
  cfg.mode = WeightingMode::kUniform;
  const auto r = run_credit_pipeline(tensor, make_meta(20, 8).visual_indices(), cfg);
  const auto a = apply_credit(r, 0.5, WeightingMode::kUniform);
  CHECK(a.token_adv == std::vector<double>(30, 0.5));
}

TEST_CASE("reverse mode favours the low-connectivity clusters") {
  const auto tensor = make_topic_attention(1, 2, 60, 24, 4, 4);
  const auto visual = make_meta(24, 8).visual_indices();
  PipelineConfig fwd;
  PipelineConfig rev;
  rev.mode = WeightingMode::kReverse;
  const auto a = run_credit_pipeline(tensor, visual, fwd);
  const auto b = run_credit_pipeline(tensor, visual, rev);
  REQUIRE(a.clustering.assignment == b.clustering.assignment);
  // The cluster with the most connectivity mass loses weight under reflection.
  const auto top = std::max_element(a.cluster_weight.begin(), a.cluster_weight.end()) - a.cluster_weight.begin();
  CHECK(b.cluster_weight[top] < a.cluster_weight[top]);
  CHECK(std::abs(sum(b.cluster_weight) - 1.0) < 1e-12);
}

TEST_CASE("pipeline is deterministic") {
  const auto tensor = make_topic_attention(3, 2, 90, 30, 5, 5);
  const auto visual = make_meta(30, 10).visual_indices();
  const auto a = run_credit_pipeline(tensor, visual, PipelineConfig{});
  const auto b = run_credit_pipeline(tensor, visual, PipelineConfig{});
  CHECK(a.clustering.assignment == b.clustering.assignment);
  CHECK(a.token_weight == b.token_weight);
}

TEST_CASE("anchor fixture recovers its connectivity targets") {
  const auto fx = make_anchor_fixture();
  REQUIRE(fx.tensor.gen_len == 540);
  const auto r = run_credit_pipeline(fx.tensor, fx.meta.visual_indices(), PipelineConfig{});
  for (std::size_t t = 0; t < 540; ++t) CHECK(r.connectivity[t] == doctest::Approx(fx.target[t]).epsilon(1e-5));
  const auto h = make_histogram(r.connectivity, 50);
  CHECK(h.above == 81);
  CHECK(h.total == 540);
  CHECK(h.threshold == doctest::Approx(0.0368).epsilon(0.001));
}

TEST_CASE("fixture targets sit on the required percentile") {
  const auto c = anchor_targets();
  REQUIRE(c.size() == 540);
  const double p85 = percentile(c, 85.0);
  std::size_t above = 0;
  for (double v : c) above += v > p85;
  CHECK(above == 81);
}
