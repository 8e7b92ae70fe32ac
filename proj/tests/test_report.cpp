// SPDX-License-Identifier: Apache-2.0
#include <random>
#include <sstream>

#include "atrl/error.hpp"
#include "atrl/fixture.hpp"
#include "atrl/pipeline.hpp"
#include "atrl/config.hpp"
#include "atrl/report.hpp"
#include "doctest.h"

using namespace atrl;

namespace {

template <class T, class W, class R>
std::string twice(const T& value, W write, R read) {
  std::stringstream a;
  write(value, a);
  const auto back = read(a);
  std::stringstream b;
  write(back, b);
  std::stringstream first;
  write(value, first);
  CHECK(b.str() == first.str());
  return first.str();
}

}  // namespace

TEST_CASE("percentile interpolates like numpy") {
  const std::vector<double> v{0.3, 0.1, 0.9, 0.5, 0.7, 0.2, 0.05};
  CHECK(percentile(v, 0) == doctest::Approx(0.05));
  CHECK(percentile(v, 85) == doctest::Approx(0.72));
  CHECK(percentile(v, 50) == doctest::Approx(0.3));
  CHECK(percentile(v, 100) == doctest::Approx(0.9));
  CHECK(percentile(v, 33.3) == doctest::Approx(0.1998));
  CHECK_THROWS_AS(percentile(std::vector<double>{}, 50), Error);
}

TEST_CASE("histogram bins every value and counts strict exceedances") {
  const std::vector<double> c{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 1.0};
  const auto h = make_histogram(c, 4, 0.2);
  CHECK(h.edges.front() == 0.0);
  CHECK(h.edges.back() == doctest::Approx(1.0));
  std::size_t n = 0;
  for (auto k : h.counts) n += k;
  CHECK(n == 10);
  CHECK(h.counts.back() == 2);  // 0.8 and 1.0
  CHECK(h.threshold == doctest::Approx(0.72));
  CHECK(h.above == 2);
  CHECK(h.anchor_fraction() == doctest::Approx(0.2));
}

TEST_CASE("all-zero connectivity still yields a valid histogram") {
  const auto h = make_histogram(std::vector<double>(5, 0.0), 3);
  CHECK(h.counts[0] == 5);
  CHECK(h.above == 0);
}

TEST_CASE("credit report text round trip") {
  const auto tensor = make_topic_attention(1, 2, 25, 12, 3, 8);
  const auto r = run_credit_pipeline(tensor, make_meta(12, 4).visual_indices(), PipelineConfig{});
  const auto rep = make_credit_report(r, 0.75, "at-rl");
  const auto text = twice(rep, write_credit_report, read_credit_report);
  CHECK(text.rfind("# atrl-credit-report v1\n# T=25 K=2 seq_adv=0.75 mode=at-rl\n", 0) == 0);

  std::stringstream missing(text.substr(0, text.rfind('\n', text.size() - 2) + 1));
  CHECK_THROWS_AS(read_credit_report(missing), Error);
  std::stringstream wrong("# something else\n");
  CHECK_THROWS_AS(read_credit_report(wrong), Error);
}

TEST_CASE("histogram, matrix, clustering and table round trips") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> c(40);
  for (double& v : c) v = unit(rng);
  twice(make_histogram(c, 7), write_histogram, read_histogram);

  Matrix m(3, 4);
  for (double& v : m.data()) v = unit(rng);
  twice(m, write_matrix, read_matrix);

  Clustering cl;
  cl.k = 3;
  cl.assignment = {0, 2, 1, 1, 0};
  cl.edge_cut = 1.25;
  cl.balance = 1.0;
  std::stringstream cs;
  write_clustering(cl, cs);
  const auto back = read_clustering(cs);
  CHECK(back.assignment == cl.assignment);
  CHECK(back.edge_cut == 1.25);

  Table t{"ablation", {{"seeds", "0..9"}, {"steps", "300"}}, {"variant", "final"}, {{"uniform", "0.9"}, {"at-rl", ""}}};
  std::stringstream ts;
  write_table(t, ts);
  CHECK(read_table(ts) == t);
}

TEST_CASE("malformed report inputs are rejected") {
  std::stringstream short_row("# atrl-matrix v1\n# rows=1 cols=2\n0.5\n");
  CHECK_THROWS_AS(read_matrix(short_row), Error);
  std::stringstream bad_cluster("# atrl-clustering v1\n# n=1 K=1 edge_cut=0 balance=1\ntoken\tcluster\n0\t3\n");
  CHECK_THROWS_AS(read_clustering(bad_cluster), Error);
  std::stringstream bad_number("# atrl-histogram v1\n# bins=1 total=1\nlo\thi\tcount\n0\tx\t1\n");
  CHECK_THROWS_AS(read_histogram(bad_number), Error);
}
