// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "atrl/calib.hpp"
#include "atrl/config.hpp"
#include "atrl/credit.hpp"
#include "atrl/partitioner.hpp"
#include "atrl/tensor_io.hpp"
#include "atrl/token_graph.hpp"

namespace atrl {

/// Wall-clock seconds spent in each credit stage.
struct StageTimings {
  double aggregate = 0.0;
  double debias = 0.0;
  double connectivity = 0.0;
  double graph = 0.0;
  double partition = 0.0;
  double refine = 0.0;
  double weights = 0.0;

  double total() const noexcept {
    return aggregate + debias + connectivity + graph + partition + refine + weights;
  }
  StageTimings& operator+=(const StageTimings& other) noexcept;
};

/// Everything the credit pipeline derives for one sequence.
struct CreditResult {
  CalibratedMatrix calibrated;
  std::vector<double> connectivity;
  TokenGraph graph;
  Clustering clustering;
  std::vector<double> phi;           // refined importance used for the cluster weights
  std::vector<double> cluster_weight;
  std::vector<double> token_weight;  // token_adv / seq_adv
  StageTimings timings;
};

/// calib -> graph -> partition -> refine -> cluster weights for one sequence.
///
/// For kAtRl and kReverse, phi starts from C (or max(C) - C) and is denoised
/// and expanded before the cluster weights. The ablation modes kUniform,
/// kRandom and kHardTopP still compute the graph stages so that reports and
/// timings are comparable. `stream_seed` drives kRandom only.
CreditResult run_credit_pipeline(const AttentionTensor& tensor, std::span<const std::size_t> visual,
                                 const PipelineConfig& config, std::uint64_t stream_seed = 0);

/// Same, starting from an already aggregated T x S matrix.
CreditResult run_credit_pipeline(const CalibratedMatrix& aggregated,
                                 std::span<const std::size_t> visual, const PipelineConfig& config,
                                 std::uint64_t stream_seed = 0);

AdvantageSignal apply_credit(const CreditResult& credit, double seq_adv, WeightingMode mode);

/// Elapsed seconds since `start`.
inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace atrl
