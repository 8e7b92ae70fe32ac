// SPDX-License-Identifier: Apache-2.0
//
// Runs the acceptance checks and prints one PASS/FAIL line per criterion.
// Exit status is the number of failed criteria that were not listed with
// --expect-fail; listed ones still print FAIL.

#include <sys/wait.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atrl/calib.hpp"
#include "atrl/config.hpp"
#include "atrl/credit.hpp"
#include "atrl/fixture.hpp"
#include "atrl/partitioner.hpp"
#include "atrl/pipeline.hpp"
#include "atrl/refine.hpp"
#include "atrl/report.hpp"
#include "atrl/tensor_io.hpp"
#include "atrl/token_graph.hpp"
#include "atrl/toy/train_report.hpp"
#include "atrl/toy/trainer.hpp"

namespace fs = std::filesystem;
using namespace atrl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = unit(rng) < 0.3 ? 0.0 : unit(rng);
  return m;
}

Clustering random_clustering(std::mt19937_64& rng, const TokenGraph& g, std::size_t k) {
  std::vector<std::uint32_t> a(g.size());
  for (std::size_t t = 0; t < a.size(); ++t) a[t] = static_cast<std::uint32_t>(t % k);
  std::shuffle(a.begin(), a.end(), rng);
  return make_clustering(g, std::move(a), k);
}

// Weighted graph with `groups` planted communities; groups = 1 gives a plain random graph.
TokenGraph random_graph(std::mt19937_64& rng, std::size_t n, std::size_t groups, double p_in, double p_out) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::size_t> group(n);
  for (std::size_t v = 0; v < n; ++v) group[v] = rng() % groups;
  std::vector<Edge> edges;
  for (std::uint32_t u = 0; u < n; ++u) {
    for (std::uint32_t v = u + 1; v < n; ++v) {
      if (unit(rng) < (group[u] == group[v] ? p_in : p_out)) edges.push_back({u, v, 0.65 + 0.35 * unit(rng)});
    }
  }
  return TokenGraph(n, std::move(edges));
}

// ---------------------------------------------------------------------------

Outcome weight_normalisation() {
  std::mt19937_64 rng(101);
  const PipelineConfig cfg;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t t = 2 + rng() % 80;
    const std::size_t s = 4 + rng() % 40;
    const Matrix agg = random_matrix(rng, t, s);
    std::vector<std::size_t> visual{0};
    for (std::size_t j = 1; j < s; ++j) {
      if (rng() % 2 == 0) visual.push_back(j);
    }
    const auto calibrated = debias(agg, bias_curve(t, cfg.bias), cfg.bias_axis);
    const auto c = connectivity(calibrated, visual);
    const auto graph = build_graph(calibrated, cfg.tau_sim);
    const std::size_t k = 1 + rng() % std::min<std::size_t>(t, 8);
    const auto clustering = random_clustering(rng, graph, k);
    const auto phi = expand(graph, calibrated, denoise(calibrated, clustering, c, cfg.refine), cfg.refine);
    for (const auto& w : {cluster_weights(c, clustering), cluster_weights(phi, clustering)}) {
      worst = std::max(worst, std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0));
    }
    const auto full = run_credit_pipeline(agg, visual, cfg);
    worst = std::max(worst, std::abs(std::accumulate(full.cluster_weight.begin(), full.cluster_weight.end(), 0.0) - 1.0));
  }
  return {worst <= 1e-9, fmt("max |sum W - 1| = %.3g over 1000 pipelines", worst)};
}

Outcome grpo_collapse() {
  PipelineConfig one;
  one.k = 1;
  std::mt19937_64 rng(202);
  bool tokens_equal = true;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t t = 2 + rng() % 60;
    const auto r = run_credit_pipeline(random_matrix(rng, t, 24), std::vector<std::size_t>{0, 1, 2, 3, 4, 5}, one);
    const double adv = std::normal_distribution<double>(0.0, 1.0)(rng);
    const auto a = apply_credit(r, adv, WeightingMode::kAtRl);
    const auto u = apply_credit(r, adv, WeightingMode::kUniform);
    tokens_equal = tokens_equal && a.token_adv == u.token_adv;
  }
  toy::TrainConfig atrl;
  atrl.steps = 50;
  toy::apply_train_setting(atrl, "k", "1");
  toy::TrainConfig uniform = atrl;
  uniform.pipeline.mode = WeightingMode::kUniform;
  bool params_equal = true;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto a = toy::train_seed(atrl, seed);
    const auto u = toy::train_seed(uniform, seed);
    params_equal = params_equal && a.digest == u.digest && a.final_params == u.final_params;
  }
  return {tokens_equal && params_equal,
          fmt("token advantages identical: %s; parameter digests identical for 3 seeds x 50 steps: %s",
              tokens_equal ? "yes" : "no", params_equal ? "yes" : "no")};
}

Outcome group_normalisation() {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst_mean = 0.0, worst_std = 0.0;
  std::size_t groups = 0;
  while (groups < 10000) {
    std::vector<double> r(2 + rng() % 31);
    const bool binary = rng() % 2 == 0;
    for (double& v : r) v = binary ? (rng() % 2 ? 1.0 : -1.0) : 3.0 * normal(rng);
    const double n = static_cast<double>(r.size());
    const double m = std::accumulate(r.begin(), r.end(), 0.0) / n;
    double var = 0.0;
    for (double v : r) var += (v - m) * (v - m);
    if (std::sqrt(var / n) < 1e-6) continue;
    ++groups;
    const auto a = group_advantage(r);
    const double am = std::accumulate(a.begin(), a.end(), 0.0) / n;
    double av = 0.0;
    for (double v : a) av += (v - am) * (v - am);
    worst_mean = std::max(worst_mean, std::abs(am));
    worst_std = std::max(worst_std, std::abs(std::sqrt(av / n) - 1.0));
  }
  const bool symmetric = group_advantage(std::vector<double>{1, 1, -1, -1}) == std::vector<double>{1, 1, -1, -1};
  return {worst_mean <= 1e-9 && worst_std <= 1e-6 && symmetric,
          fmt("max |mean| %.3g, max |std-1| %.3g over 10000 groups; [1,1,-1,-1] exact: %s", worst_mean, worst_std,
              symmetric ? "yes" : "no")};
}

Outcome bias_contract() {
  double worst = 0.0;
  for (std::size_t t : {1u, 2u, 7u, 64u, 541u}) {
    const auto b = bias_curve(t, BiasParams{});
    worst = std::max(worst, std::abs(std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(t) - 1.0));
  }
  BiasParams flat;
  flat.lambda_exp = 0.0;
  flat.lambda_cos = 0.0;
  const auto ones = bias_curve(64, flat);
  const bool all_ones = std::all_of(ones.begin(), ones.end(), [](double v) { return v == 1.0; });
  return {worst <= 1e-9 && all_ones,
          fmt("max |mean-1| = %.3g for T in {1,2,7,64,541}; flat curve all ones: %s", worst, all_ones ? "yes" : "no")};
}

Outcome gradient_fidelity() {
  toy::TrainConfig c;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) worst = std::max(worst, toy::grad_check(c, seed, 20, 1e-5).max_rel_error);
  return {worst < 1e-4, fmt("max relative error %.3g over 20 coordinates x 5 seeds", worst)};
}

double brute_force_cut(const TokenGraph& g, std::size_t cap) {
  const std::size_t n = g.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::uint32_t> a(n);
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    const auto ones = static_cast<std::size_t>(std::popcount(mask));
    if (ones > cap || n - ones > cap) continue;
    for (std::size_t v = 0; v < n; ++v) a[v] = (mask >> v) & 1u;
    best = std::min(best, edge_cut(g, a));
  }
  return best;
}

Outcome partitioner_quality() {
  std::mt19937_64 rng(606);
  std::size_t within = 0, exact = 0;
  bool balanced = true, deterministic = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + rng() % 9;
    const auto g = random_graph(rng, n, 2, 0.7, 0.25);
    const auto c = partition(g, 2, kDefaultEpsBal, trial);
    const double opt = brute_force_cut(g, max_cluster_size(n, 2, kDefaultEpsBal));
    within += c.edge_cut <= 1.1 * opt + 1e-12;
    exact += c.edge_cut <= opt + 1e-12;
    balanced = balanced && c.balance <= 1.1 + 1e-12;
    deterministic = deterministic && partition(g, 2, kDefaultEpsBal, trial).assignment == c.assignment;
  }
  double cut = 0.0, random_cut = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 40 + rng() % 361;
    const std::size_t k = cluster_count(n);
    const double density = 0.05 + 0.25 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto g = random_graph(rng, n, 1, density, density);
    const auto c = partition(g, k, kDefaultEpsBal, trial);
    cut += c.edge_cut;
    double baseline = 0.0;
    for (int r = 0; r < 50; ++r) baseline += random_clustering(rng, g, k).edge_cut;
    random_cut += baseline / 50.0;
    balanced = balanced && c.balance <= 1.1 + 1e-12;
    deterministic = deterministic && partition(g, k, kDefaultEpsBal, trial).assignment == c.assignment;
  }
  cut /= 50.0;
  random_cut /= 50.0;
  const bool pass = within == 100 && cut <= random_cut && balanced && deterministic;
  return {pass, fmt("(a) %zu/100 within 10%% of optimum (%zu exact); (b) mean cut %.4g vs random %.4g; "
                    "(c) balance <= 1.1: %s; (d) deterministic: %s",
                    within, exact, cut, random_cut, balanced ? "yes" : "no", deterministic ? "yes" : "no")};
}

Outcome anchor_fraction(const fs::path& fixtures, const fs::path& cli) {
  const auto tensor = load_attention(fixtures / "anchor540.atn");
  const auto meta = load_token_meta(fixtures / "anchor540.meta.json", tensor.ctx_len);
  const PipelineConfig cfg;
  const auto r = run_credit_pipeline(tensor, meta.visual_indices(), cfg);
  const auto h = make_histogram(r.connectivity, cfg.histogram_bins, 0.15);
  bool ok = h.above == 81 && h.total == 540 && std::abs(h.anchor_fraction() - 0.150) <= 0.001;
  std::string detail = fmt("%zu/%zu above threshold %s, fraction %.3f", h.above, h.total,
                           format_g9(h.threshold).c_str(), h.anchor_fraction());
  if (fs::exists(cli)) {
    const auto tmp = fs::temp_directory_path() / "atrl_acceptance";
    fs::create_directories(tmp);
    const std::string cmd = "'" + cli.string() + "' analyze --attention '" + (fixtures / "anchor540.atn").string() +
                            "' --meta '" + (fixtures / "anchor540.meta.json").string() + "' --report '" +
                            (tmp / "report.tsv").string() + "' --histogram '" + (tmp / "hist.tsv").string() + "'";
    std::string out;
    if (FILE* pipe = popen(cmd.c_str(), "r")) {
      char buf[1024];
      std::size_t n = 0;
      while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
      const int status = pclose(pipe);
      const bool printed = WIFEXITED(status) && WEXITSTATUS(status) == 0 &&
                           out.find("anchors above threshold: 81/540") != std::string::npos &&
                           out.find("anchor fraction: 0.150") != std::string::npos;
      ok = ok && printed;
      detail += printed ? "; cli analyze agrees" : "; cli analyze output differs";
    }
  } else {
    detail += "; cli binary not found, checked in-process only";
  }
  return {ok, detail};
}

struct ModeRuns {
  std::vector<double> final_reward;
  std::vector<std::optional<std::size_t>> steps;
  double mean = 0.0;
};

ModeRuns run_mode(toy::TrainConfig c, WeightingMode mode) {
  c.pipeline.mode = mode;
  const auto v = toy::train(c);
  ModeRuns out;
  for (const auto& r : v.runs) {
    out.final_reward.push_back(r.final_reward);
    out.steps.push_back(r.steps_to_threshold);
  }
  out.mean = v.mean_final_reward();
  return out;
}

std::string steps_text(const std::optional<std::size_t>& s) { return s ? std::to_string(*s) : "-"; }

Outcome directional_claims() {
  const auto start = Clock::now();
  toy::TrainConfig c;
  c.seeds = toy::parse_seed_list("0..9");
  const auto uniform = run_mode(c, WeightingMode::kUniform);
  const auto atrl = run_mode(c, WeightingMode::kAtRl);
  const auto reverse = run_mode(c, WeightingMode::kReverse);
  const auto hard = run_mode(c, WeightingMode::kHardTopP);
  const double seconds = seconds_since(start);

  std::size_t faster = 0, lower = 0;
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    const auto& a = atrl.steps[i];
    const auto& u = uniform.steps[i];
    faster += a && (!u || *a <= *u);
    lower += reverse.final_reward[i] < uniform.final_reward[i];
    std::printf("    seed %zu  steps to %.2f: uniform %s at-rl %s   final: uniform %.3f at-rl %.3f reverse %.3f hard %.3f\n",
                i, c.reward_threshold, steps_text(u).c_str(), steps_text(a).c_str(), uniform.final_reward[i],
                atrl.final_reward[i], reverse.final_reward[i], hard.final_reward[i]);
  }
  const bool a = faster >= 7, b = lower >= 7, order = uniform.mean < hard.mean && hard.mean < atrl.mean;
  return {a && b && order && seconds < 1800.0,
          fmt("(a) at-rl no slower on %zu/10 seeds; (b) reverse below uniform on %zu/10; (c) means uniform %.4f, "
              "hard %.4f, at-rl %.4f (%s); %.0f s",
              faster, lower, uniform.mean, hard.mean, atrl.mean, order ? "ordered" : "not ordered", seconds)};
}

Outcome kl_free_parity() {
  toy::TrainConfig c;
  c.seeds = toy::parse_seed_list("0..4");
  toy::TrainConfig free = c;
  free.pipeline.surrogate.beta = 0.0;
  const auto with_kl = toy::train(c);
  const auto without = toy::train(free);
  double per_seed = 0.0;
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    per_seed += std::abs(with_kl.runs[i].final_reward - without.runs[i].final_reward);
  }
  per_seed /= static_cast<double>(c.seeds.size());
  const double diff = std::abs(with_kl.mean_final_reward() - without.mean_final_reward());
  return {diff < 0.05, fmt("mean final reward beta=0.02 %.4f, beta=0 %.4f, |diff| %.4f (mean per-seed |diff| %.4f)",
                           with_kl.mean_final_reward(), without.mean_final_reward(), diff, per_seed)};
}

Outcome overhead() {
  const auto tensor = make_topic_attention(4, 8, 512, 1024, 24, 10);
  const auto visual = make_meta(1024, 576).visual_indices();
  const PipelineConfig cfg;
  double best = std::numeric_limits<double>::infinity();
  StageTimings stages;
  for (int rep = 0; rep < 3; ++rep) {
    const auto start = Clock::now();
    const auto r = run_credit_pipeline(tensor, visual, cfg);
    const auto h = make_histogram(r.connectivity, cfg.histogram_bins, 0.15);
    const double s = seconds_since(start);
    if (s < best) {
      best = s;
      stages = r.timings;
    }
    (void)h;
  }
  toy::TrainConfig c;
  c.steps = 20;
  const auto run = toy::train_seed(c, 0);
  const auto& t = run.timings;
  const bool breakdown = t.total > 0.0 && t.rollout > 0.0 && t.credit.total() > 0.0 && t.objective > 0.0 &&
                         t.update > 0.0;
  return {best < 0.25 && breakdown,
          fmt("T=512 S=1024 L=4 H=8 pipeline %.1f ms (graph %.1f, partition %.1f); toy credit share %.1f%% of "
              "%.2f s (reported only)",
              best * 1e3, stages.graph * 1e3, stages.partition * 1e3, 100.0 * t.credit.total() / t.total, t.total)};
}

template <class T, class W, class R>
bool same_text(const T& value, W write, R read) {
  std::stringstream a;
  write(value, a);
  std::stringstream in(a.str());
  const auto back = read(in);
  std::stringstream b;
  write(back, b);
  return a.str() == b.str();
}

Outcome round_trips() {
  std::mt19937_64 rng(1111);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::size_t ok = 0, total = 0;
  auto tally = [&](bool good) {
    ok += good;
    ++total;
  };
  const auto dir = fs::temp_directory_path() / "atrl_acceptance";
  fs::create_directories(dir);
  for (int trial = 0; trial < 100; ++trial) {
    const auto l = static_cast<std::uint32_t>(1 + rng() % 3), h = static_cast<std::uint32_t>(1 + rng() % 3);
    const auto t = static_cast<std::uint32_t>(1 + rng() % 30), s = static_cast<std::uint32_t>(1 + rng() % 40);
    AttentionTensor a = trial % 2 ? make_topic_attention(l, h, t, std::max<std::uint32_t>(s, 2), 3, trial)
                                  : AttentionTensor::zeros(l, h, t, s);
    if (trial % 2 == 0) {
      for (float& v : a.values) v = static_cast<float>(unit(rng));
    }
    save_attention(a, dir / "rt.atn");
    const auto back = load_attention(dir / "rt.atn");
    tally(back.values == a.values && back.layers == a.layers && back.heads == a.heads && back.gen_len == a.gen_len &&
          back.ctx_len == a.ctx_len && back.row_stochastic == a.row_stochastic);

    auto meta = make_meta(s, rng() % (s + 1));
    if (trial % 3 == 0) {
      meta.gen_text = std::vector<std::string>(t);
      for (auto& w : *meta.gen_text) w = "tok" + std::to_string(rng() % 1000) + (rng() % 2 ? " \"q\"" : "");
    }
    save_token_meta(meta, dir / "rt.meta.json");
    const auto mb = load_token_meta(dir / "rt.meta.json");
    tally(mb.ctx_modality == meta.ctx_modality && mb.gen_text == meta.gen_text);

    Matrix m = random_matrix(rng, 1 + rng() % 20, 1 + rng() % 20);
    tally(same_text(m, write_matrix, read_matrix));
    const auto graph = build_graph(m, 0.5);
    tally(same_text(graph, write_adjacency, read_adjacency));
    const auto cl = random_clustering(rng, graph, 1 + rng() % std::min<std::size_t>(m.rows(), 4));
    tally(same_text(cl, write_clustering, read_clustering));
    std::vector<double> c(1 + rng() % 200);
    for (double& v : c) v = unit(rng);
    tally(same_text(make_histogram(c, 1 + rng() % 50, 0.15), write_histogram, read_histogram));
    const auto credit = run_credit_pipeline(m, std::vector<std::size_t>{0}, PipelineConfig{});
    tally(same_text(make_credit_report(credit, 2.0 * unit(rng) - 1.0, "at-rl"), write_credit_report,
                    read_credit_report));
    Table table{"sweep", {{"seeds", std::to_string(trial)}}, {"point", "value"}, {}};
    for (std::size_t r = 0; r < 1 + rng() % 5; ++r) table.rows.push_back({std::to_string(r), format_g9(unit(rng))});
    tally(same_text(table, write_table, read_table));
  }
  toy::TrainConfig c;
  c.steps = 2;
  c.prompts_per_step = 2;
  c.seeds = {0, 1};
  toy::TrainReport report;
  report.config = toy::describe(c);
  report.variants.push_back(toy::train(c, "at-rl"));
  for (int trial = 0; trial < 100; ++trial) {
    // Perturb the numbers so every instance differs.
    for (auto& v : report.variants)
      for (auto& r : v.runs)
        for (double& x : r.reward) x = 2.0 * unit(rng) - 1.0;
    toy::save_train_report(report, dir / "rt.json");
    tally(toy::same_serialised(report, toy::load_train_report(dir / "rt.json")));
  }
  return {ok == total, fmt("%zu/%zu load(save(x)) == x across ATN1, metadata, matrix, adjacency, clustering, "
                           "histogram, credit report, table and train report",
                           ok, total)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string fixtures = "fixtures";
  std::vector<int> only, expect_fail;
  app.add_option("--fixtures", fixtures, "Directory holding anchor540.atn and anchor540.meta.json");
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--expect-fail", expect_fail, "Known failures: reported but not counted in the exit status");
  CLI11_PARSE(app, argc, argv);

  const fs::path cli = fs::path(argv[0]).parent_path() / "atrl";
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"weight normalisation", weight_normalisation},
      {"single-cluster collapse", grpo_collapse},
      {"group normalisation", group_normalisation},
      {"bias curve", bias_contract},
      {"gradient fidelity", gradient_fidelity},
      {"partitioner quality", partitioner_quality},
      {"anchor fraction", [&] { return anchor_fraction(fixtures, cli); }},
      {"directional training", directional_claims},
      {"kl-free parity", kl_free_parity},
      {"overhead", overhead},
      {"round trips", round_trips},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto start = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const bool expected = std::find(expect_fail.begin(), expect_fail.end(), id) != expect_fail.end();
    std::printf("%s %2d %s: %s [%.1f s]%s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(),
                seconds_since(start), !o.pass && expected ? " (known failure)" : "");
    std::fflush(stdout);
    failed += !o.pass && !expected;
  }
  return failed;
}
