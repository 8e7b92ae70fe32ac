// SPDX-License-Identifier: Apache-2.0
//
// atrl: anchor-token credit assignment from the command line.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atrl/calib.hpp"
#include "atrl/config.hpp"
#include "atrl/error.hpp"
#include "atrl/partitioner.hpp"
#include "atrl/pipeline.hpp"
#include "atrl/report.hpp"
#include "atrl/tensor_io.hpp"
#include "atrl/token_graph.hpp"
#include "atrl/toy/train_report.hpp"
#include "atrl/toy/trainer.hpp"

namespace {

using namespace atrl;
using toy::TrainConfig;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitInternal = 2;

struct Settings {
  std::string config_path;
  std::string seed;
  std::map<std::string, std::string> flags;  // key -> value, only flags given on the command line
};

// flags > config file > ATRL_SEED (seed only) > defaults.
TrainConfig resolve(const Settings& s) {
  TrainConfig config;
  if (const char* env = std::getenv("ATRL_SEED"); env != nullptr && *env != '\0') {
    toy::apply_train_setting(config, "seed", env);
  }
  if (!s.config_path.empty()) {
    for (const auto& [k, v] : load_key_values(s.config_path)) toy::apply_train_setting(config, k, v);
  }
  for (const auto& [k, v] : s.flags) toy::apply_train_setting(config, k, v);
  if (!s.seed.empty()) toy::apply_train_setting(config, "seed", s.seed);
  config.pipeline.validate();
  return config;
}

template <class Write>
void write_file(const std::string& path, Write&& write) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path);
  write(out);
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed for " + path);
}

std::string ms(double seconds) { return format_g9(seconds * 1e3) + " ms"; }

void print_timings(const StageTimings& t) {
  std::printf("pipeline: %s (aggregate %s, debias %s, connectivity %s, graph %s, partition %s, refine %s, weights %s)\n",
              ms(t.total()).c_str(), ms(t.aggregate).c_str(), ms(t.debias).c_str(), ms(t.connectivity).c_str(),
              ms(t.graph).c_str(), ms(t.partition).c_str(), ms(t.refine).c_str(), ms(t.weights).c_str());
}

struct Inputs {
  AttentionTensor tensor;
  std::vector<std::size_t> visual;
};

Inputs load_inputs(const std::string& attention, const std::string& meta_path) {
  Inputs in;
  in.tensor = load_attention(attention);
  if (!meta_path.empty()) {
    const TokenMeta meta = load_token_meta(meta_path, in.tensor.ctx_len, std::nullopt);
    if (meta.gen_text && meta.gen_text->size() != in.tensor.gen_len) {
      throw Error(ErrorCode::kLengthMismatch, "gen_text has " + std::to_string(meta.gen_text->size()) +
                                                  " entries but the tensor has " +
                                                  std::to_string(in.tensor.gen_len) + " generated tokens");
    }
    in.visual = meta.visual_indices();
  }
  return in;
}

int cmd_analyze(const Settings& s, const std::string& attention, const std::string& meta, double seq_adv,
                const std::string& report_path, const std::string& hist_path) {
  const TrainConfig config = resolve(s);
  const Inputs in = load_inputs(attention, meta);
  const CreditResult credit = run_credit_pipeline(in.tensor, in.visual, config.pipeline);
  const CreditReport report = make_credit_report(credit, seq_adv, std::string(to_string(config.pipeline.mode)));
  const Histogram hist = make_histogram(credit.connectivity, config.pipeline.histogram_bins, 0.15);
  write_file(report_path, [&](std::ostream& o) { write_credit_report(report, o); });
  write_file(hist_path, [&](std::ostream& o) { write_histogram(hist, o); });
  std::printf("tokens: %zu  clusters: %zu  edge cut: %s  balance: %s\n", credit.connectivity.size(),
              credit.clustering.k, format_g9(credit.clustering.edge_cut).c_str(),
              format_g9(credit.clustering.balance).c_str());
  std::printf("anchor threshold (85th percentile of C): %s\n", format_g9(hist.threshold).c_str());
  std::printf("anchors above threshold: %zu/%zu\n", hist.above, hist.total);
  std::printf("anchor fraction: %.3f\n", hist.anchor_fraction());
  print_timings(credit.timings);
  return kExitOk;
}

int cmd_debias(const Settings& s, const std::string& attention, const std::string& out_path) {
  const TrainConfig config = resolve(s);
  const AttentionTensor tensor = load_attention(attention);
  const auto agg = aggregate(tensor, config.pipeline.resolve_top_layers(tensor.layers));
  const std::size_t n = config.pipeline.bias_axis == BiasAxis::kGenerated ? agg.rows() : agg.cols();
  const auto calibrated = debias(agg, bias_curve(n, config.pipeline.bias), config.pipeline.bias_axis);
  write_file(out_path, [&](std::ostream& o) { write_matrix(calibrated, o); });
  std::printf("calibrated %zu x %zu matrix written to %s\n", calibrated.rows(), calibrated.cols(), out_path.c_str());
  return kExitOk;
}

int cmd_partition(const Settings& s, const std::string& attention, const std::string& graph_in,
                  const std::string& out_path, const std::string& graph_out) {
  const TrainConfig config = resolve(s);
  if (attention.empty() == graph_in.empty()) {
    throw Error(ErrorCode::kInvalidParameter, "give exactly one of --attention or --graph");
  }
  TokenGraph graph;
  if (!graph_in.empty()) {
    std::ifstream in(graph_in);
    if (!in) throw Error(ErrorCode::kIoFailure, "cannot read " + graph_in);
    graph = read_adjacency(in);
  } else {
    const AttentionTensor tensor = load_attention(attention);
    const auto agg = aggregate(tensor, config.pipeline.resolve_top_layers(tensor.layers));
    const std::size_t n = config.pipeline.bias_axis == BiasAxis::kGenerated ? agg.rows() : agg.cols();
    graph = build_graph(debias(agg, bias_curve(n, config.pipeline.bias), config.pipeline.bias_axis),
                        config.pipeline.tau_sim);
  }
  if (!graph_out.empty()) write_file(graph_out, [&](std::ostream& o) { write_adjacency(graph, o); });
  const Clustering c =
      partition(graph, config.pipeline.resolve_k(graph.size()), config.pipeline.eps_bal, config.pipeline.seed);
  write_file(out_path, [&](std::ostream& o) { write_clustering(c, o); });
  std::printf("nodes: %zu  edges: %zu  K: %zu  edge cut: %s  balance: %s\n", graph.size(), graph.edges().size(), c.k,
              format_g9(c.edge_cut).c_str(), format_g9(c.balance).c_str());
  return kExitOk;
}

int cmd_credit(const Settings& s, const std::string& attention, const std::string& meta, double seq_adv,
               const std::string& out_path) {
  const TrainConfig config = resolve(s);
  const Inputs in = load_inputs(attention, meta);
  const CreditResult credit = run_credit_pipeline(in.tensor, in.visual, config.pipeline, config.pipeline.seed);
  const CreditReport report = make_credit_report(credit, seq_adv, std::string(to_string(config.pipeline.mode)));
  write_file(out_path, [&](std::ostream& o) { write_credit_report(report, o); });
  std::printf("mode: %s  tokens: %zu  clusters: %zu\n", report.mode.c_str(), report.rows.size(), report.k);
  for (std::size_t k = 0; k < credit.cluster_weight.size(); ++k) {
    std::printf("cluster %zu: weight %s\n", k, format_g9(credit.cluster_weight[k]).c_str());
  }
  return kExitOk;
}

void print_variant(const toy::VariantReport& v) {
  for (const auto& r : v.runs) {
    const auto& t = r.timings;
    std::printf("%-14s seed %-3llu final %-8s steps-to-%s %-6s anchor fraction %.3f\n", v.label.c_str(),
                static_cast<unsigned long long>(r.seed), format_g9(r.final_reward).c_str(), "threshold",
                r.steps_to_threshold ? std::to_string(*r.steps_to_threshold).c_str() : "never",
                r.anchors.anchor_fraction());
    std::printf("    timings: total %s = rollout %s + credit %s + objective %s + update %s (+ %s other)\n",
                ms(t.total).c_str(), ms(t.rollout).c_str(), ms(t.credit.total()).c_str(), ms(t.objective).c_str(),
                ms(t.update).c_str(),
                ms(t.total - t.rollout - t.credit.total() - t.objective - t.update).c_str());
  }
  std::printf("%-14s mean final reward %s\n", v.label.c_str(), format_g9(v.mean_final_reward()).c_str());
}

TrainConfig resolve_toy(const Settings& s, const std::string& seeds) {
  TrainConfig config = resolve(s);
  if (!seeds.empty()) config.seeds = toy::parse_seed_list(seeds);
  config.validate();
  return config;
}

int cmd_train(const Settings& s, const std::string& seeds, const std::string& out_path) {
  const TrainConfig config = resolve_toy(s, seeds);
  toy::TrainReport report;
  report.config = toy::describe(config);
  report.variants.push_back(toy::train(config));
  print_variant(report.variants.back());
  if (!out_path.empty()) toy::save_train_report(report, out_path);
  return kExitOk;
}

double mean_steps(const toy::VariantReport& v, std::size_t& reached) {
  reached = 0;
  double sum = 0.0;
  for (const auto& r : v.runs) {
    if (r.steps_to_threshold) {
      ++reached;
      sum += static_cast<double>(*r.steps_to_threshold);
    }
  }
  return reached == 0 ? 0.0 : sum / static_cast<double>(reached);
}

int cmd_ablate(const Settings& s, const std::string& seeds, const std::string& out_path, const std::string& json_path) {
  const TrainConfig base = resolve_toy(s, seeds);
  struct Variant {
    std::string label;
    WeightingMode mode;
    double p;
  };
  std::vector<Variant> variants = {{"uniform", WeightingMode::kUniform, base.pipeline.hard_p},
                                   {"random", WeightingMode::kRandom, base.pipeline.hard_p},
                                   {"reverse", WeightingMode::kReverse, base.pipeline.hard_p}};
  for (double p : {0.05, 0.10, 0.15, 0.20, 0.30, 0.50, 0.75}) {
    char label[32];
    std::snprintf(label, sizeof label, "hard-top%.0f%%", p * 100.0);
    variants.push_back({label, WeightingMode::kHardTopP, p});
  }
  variants.push_back({"at-rl", WeightingMode::kAtRl, base.pipeline.hard_p});

  toy::TrainReport report;
  report.config = toy::describe(base);
  for (const auto& v : variants) {
    TrainConfig c = base;
    c.pipeline.mode = v.mode;
    c.pipeline.hard_p = v.p;
    report.variants.push_back(toy::train(c, v.label));
    print_variant(report.variants.back());
  }
  const double reference = report.variants.front().mean_final_reward();
  Table table;
  table.kind = "ablation";
  table.meta = {{"seeds", std::to_string(base.seeds.size())}, {"steps", std::to_string(base.steps)},
                {"metric", "final mean reward (trailing window)"}};
  table.columns = {"variant", "mode", "hard_p", "final_reward", "delta_vs_uniform", "seeds_reaching_threshold",
                   "mean_steps_to_threshold", "note"};
  for (const auto& v : report.variants) {
    std::size_t reached = 0;
    const double steps = mean_steps(v, reached);
    table.rows.push_back({v.label, std::string(to_string(v.mode)),
                          v.mode == WeightingMode::kHardTopP ? format_g9(v.hard_p) : "-",
                          format_g9(v.mean_final_reward()), format_g9(v.mean_final_reward() - reference),
                          std::to_string(reached), reached ? format_g9(steps) : "-",
                          v.mode == WeightingMode::kAtRl ? "soft-weighting reference" : "-"});
  }
  write_file(out_path, [&](std::ostream& o) { write_table(table, o); });
  if (!json_path.empty()) toy::save_train_report(report, json_path);
  write_table(table, std::cout);
  return kExitOk;
}

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

GridAxis parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::kInvalidParameter, "grid axis must be key=v1,v2,...");
  GridAxis axis{spec.substr(0, eq), {}};
  std::size_t start = eq + 1;
  while (true) {
    const auto comma = spec.find(',', start);
    axis.values.push_back(spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return axis;
}

int cmd_sweep(const Settings& s, const std::string& seeds, const std::vector<std::string>& grid,
              const std::string& out_path, const std::string& json_path) {
  const TrainConfig base = resolve_toy(s, seeds);
  std::vector<GridAxis> axes;
  for (const auto& g : grid) axes.push_back(parse_axis(g));
  // Validate every value up front so a typo fails before any training.
  for (const auto& a : axes) {
    for (const auto& v : a.values) {
      TrainConfig probe = base;
      toy::apply_train_setting(probe, a.key, v);
      probe.validate();
    }
  }

  toy::TrainReport report;
  report.config = toy::describe(base);
  report.variants.push_back(toy::train(base, "default"));
  print_variant(report.variants.back());
  const double reference = report.variants.front().mean_final_reward();

  Table table;
  table.kind = "sweep";
  table.meta = {{"seeds", std::to_string(base.seeds.size())}, {"steps", std::to_string(base.steps)},
                {"metric", "final mean reward (trailing window)"}};
  table.columns.push_back("point");
  for (const auto& a : axes) table.columns.push_back(a.key);
  table.columns.insert(table.columns.end(), {"final_reward", "delta_vs_default"});
  std::vector<std::string> row{"default"};
  for (const auto& a : axes) row.push_back(toy::get_train_setting(base, a.key));
  row.insert(row.end(), {format_g9(reference), format_g9(0.0)});
  table.rows.push_back(row);

  std::size_t points = 1;
  for (const auto& a : axes) points *= a.values.size();
  if (axes.empty()) points = 0;
  for (std::size_t p = 0; p < points; ++p) {
    TrainConfig c = base;
    std::vector<std::string> cells{std::to_string(p + 1)};
    std::string label;
    std::size_t rest = p;
    // Row-major over the axes: the last axis varies fastest.
    std::vector<std::size_t> idx(axes.size());
    for (std::size_t a = axes.size(); a-- > 0;) {
      idx[a] = rest % axes[a].values.size();
      rest /= axes[a].values.size();
    }
    for (std::size_t a = 0; a < axes.size(); ++a) {
      toy::apply_train_setting(c, axes[a].key, axes[a].values[idx[a]]);
      cells.push_back(axes[a].values[idx[a]]);
      label += (a ? "," : "") + axes[a].key + "=" + axes[a].values[idx[a]];
    }
    report.variants.push_back(toy::train(c, label));
    print_variant(report.variants.back());
    const double r = report.variants.back().mean_final_reward();
    cells.insert(cells.end(), {format_g9(r), format_g9(r - reference)});
    table.rows.push_back(std::move(cells));
  }
  write_file(out_path, [&](std::ostream& o) { write_table(table, o); });
  if (!json_path.empty()) toy::save_train_report(report, json_path);
  write_table(table, std::cout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anchor-token credit assignment: attention calibration, token clustering and advantage weighting"};
  app.require_subcommand(1);
  app.fallthrough();
  Settings settings;
  app.add_option("--config", settings.config_path, "Flat key=value config file (flags override it)");
  app.add_option("--seed", settings.seed, "Global seed (falls back to ATRL_SEED, then 0)");

  std::vector<std::string> keys = pipeline_keys();
  for (const auto& k : toy::train_keys()) keys.push_back(k);
  std::map<std::string, std::string> raw;
  for (const auto& key : keys) {
    if (key == "seed") continue;
    app.add_option("--" + key, raw[key], "Setting '" + key + "'")->group("Settings");
  }

  std::string attention, meta, report_path = "credit_report.tsv", hist_path = "histogram.tsv", out, graph_in,
                                graph_out, seeds, json_path;
  double seq_adv = 1.0;
  std::vector<std::string> grid;

  auto* analyze = app.add_subcommand("analyze", "Full credit pipeline on one sequence; writes report and histogram");
  analyze->add_option("--attention", attention, "ATN1 attention file")->required();
  analyze->add_option("--meta", meta, "Token metadata JSON")->required();
  analyze->add_option("--seq-adv", seq_adv, "Sequence advantage to distribute");
  analyze->add_option("--report", report_path, "Credit report output");
  analyze->add_option("--histogram", hist_path, "Connectivity histogram output");

  auto* debias_cmd = app.add_subcommand("debias", "Aggregate and debias attention; writes the calibrated matrix");
  debias_cmd->add_option("--attention", attention, "ATN1 attention file")->required();
  debias_cmd->add_option("--out", out, "Matrix output")->required();

  auto* partition_cmd = app.add_subcommand("partition", "Build the token graph and partition it");
  partition_cmd->add_option("--attention", attention, "ATN1 attention file");
  partition_cmd->add_option("--graph", graph_in, "Adjacency file instead of attention");
  partition_cmd->add_option("--out", out, "Clustering output")->required();
  partition_cmd->add_option("--graph-out", graph_out, "Also write the adjacency list");

  auto* credit_cmd = app.add_subcommand("credit", "Token advantages for one sequence");
  credit_cmd->add_option("--attention", attention, "ATN1 attention file")->required();
  credit_cmd->add_option("--meta", meta, "Token metadata JSON")->required();
  credit_cmd->add_option("--seq-adv", seq_adv, "Sequence advantage to distribute");
  credit_cmd->add_option("--out", out, "Credit report output")->required();

  auto* train_cmd = app.add_subcommand("train-toy", "Train the synthetic attention policy");
  train_cmd->add_option("--seeds", seeds, "Seed list: 0..9, 0,1,2 or 7");
  train_cmd->add_option("--out", out, "JSON report output");

  auto* ablate_cmd = app.add_subcommand("ablate", "Compare weighting modes on shared seeds");
  ablate_cmd->add_option("--seeds", seeds, "Seed list");
  ablate_cmd->add_option("--out", out, "Table output")->required();
  ablate_cmd->add_option("--json", json_path, "Full JSON report output");

  auto* sweep_cmd = app.add_subcommand("sweep", "Grid over settings with deltas against the default row");
  sweep_cmd->add_option("--seeds", seeds, "Seed list");
  sweep_cmd->add_option("--grid", grid, "Axis key=v1,v2,... (repeatable; Cartesian product)");
  sweep_cmd->add_option("--out", out, "Table output")->required();
  sweep_cmd->add_option("--json", json_path, "Full JSON report output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }
  for (const auto& key : keys) {
    if (key != "seed" && app.count("--" + key) > 0) settings.flags[key] = raw[key];
  }

  try {
    if (analyze->parsed()) return cmd_analyze(settings, attention, meta, seq_adv, report_path, hist_path);
    if (debias_cmd->parsed()) return cmd_debias(settings, attention, out);
    if (partition_cmd->parsed()) return cmd_partition(settings, attention, graph_in, out, graph_out);
    if (credit_cmd->parsed()) return cmd_credit(settings, attention, meta, seq_adv, out);
    if (train_cmd->parsed()) return cmd_train(settings, seeds, out);
    if (ablate_cmd->parsed()) return cmd_ablate(settings, seeds, out, json_path);
    if (sweep_cmd->parsed()) return cmd_sweep(settings, seeds, grid, out, json_path);
  } catch (const Error& e) {
    std::fprintf(stderr, "atrl: %s: %s\n", std::string(to_string(e.code())).c_str(), e.what());
    return is_input_error(e.code()) ? kExitInput : kExitInternal;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "atrl: internal error: %s\n", e.what());
    return kExitInternal;
  }
  return kExitInput;
}
