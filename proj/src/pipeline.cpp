// SPDX-License-Identifier: Apache-2.0

#include "atrl/pipeline.hpp"

#include "atrl/error.hpp"
#include "atrl/refine.hpp"

namespace atrl {

StageTimings& StageTimings::operator+=(const StageTimings& o) noexcept {
  aggregate += o.aggregate;
  debias += o.debias;
  connectivity += o.connectivity;
  graph += o.graph;
  partition += o.partition;
  refine += o.refine;
  weights += o.weights;
  return *this;
}

namespace {

using Clock = std::chrono::steady_clock;

CreditResult run_from_aggregated(CalibratedMatrix aggregated, std::span<const std::size_t> visual,
                                 const PipelineConfig& config, std::uint64_t stream_seed,
                                 double aggregate_seconds) {
  config.validate();
  CreditResult r;
  r.timings.aggregate = aggregate_seconds;
  const std::size_t t_len = aggregated.rows();

  auto start = Clock::now();
  const std::size_t bias_len = config.bias_axis == BiasAxis::kGenerated ? t_len : aggregated.cols();
  r.calibrated = debias(aggregated, bias_curve(bias_len, config.bias), config.bias_axis);
  r.timings.debias = seconds_since(start);

  start = Clock::now();
  r.connectivity = connectivity(r.calibrated, visual);
  r.timings.connectivity = seconds_since(start);

  start = Clock::now();
  r.graph = build_graph(r.calibrated, config.tau_sim);
  r.timings.graph = seconds_since(start);

  start = Clock::now();
  r.clustering = partition(r.graph, config.resolve_k(t_len), config.eps_bal, config.seed);
  r.timings.partition = seconds_since(start);

  start = Clock::now();
  const bool reflected = config.mode == WeightingMode::kReverse;
  std::vector<double> phi = reflected ? reflect(r.connectivity) : r.connectivity;
  phi = denoise(r.calibrated, r.clustering, phi, config.refine);
  phi = expand(r.graph, r.calibrated, phi, config.refine);
  r.phi = std::move(phi);
  r.timings.refine = seconds_since(start);

  start = Clock::now();
  r.cluster_weight = cluster_weights(r.phi, r.clustering);
  switch (config.mode) {
    case WeightingMode::kAtRl:
    case WeightingMode::kReverse:
      r.token_weight.resize(t_len);
      for (std::size_t t = 0; t < t_len; ++t) {
        r.token_weight[t] = r.cluster_weight[r.clustering.assignment[t]];
      }
      break;
    default:
      r.token_weight = ablation_weights(r.connectivity, config.mode, config.hard_p, stream_seed);
      break;
  }
  r.timings.weights = seconds_since(start);
  return r;
}

}  // namespace

CreditResult run_credit_pipeline(const AttentionTensor& tensor, std::span<const std::size_t> visual,
                                 const PipelineConfig& config, std::uint64_t stream_seed) {
  const auto start = Clock::now();
  CalibratedMatrix aggregated = aggregate(tensor, config.resolve_top_layers(tensor.layers));
  const double elapsed = seconds_since(start);
  return run_from_aggregated(std::move(aggregated), visual, config, stream_seed, elapsed);
}

CreditResult run_credit_pipeline(const CalibratedMatrix& aggregated,
                                 std::span<const std::size_t> visual, const PipelineConfig& config,
                                 std::uint64_t stream_seed) {
  return run_from_aggregated(aggregated, visual, config, stream_seed, 0.0);
}

AdvantageSignal apply_credit(const CreditResult& credit, double seq_adv, WeightingMode mode) {
  if (mode == WeightingMode::kAtRl) return modulate(seq_adv, credit.cluster_weight, credit.clustering);
  return scale_tokens(seq_adv, credit.token_weight, mode);
}

}  // namespace atrl
