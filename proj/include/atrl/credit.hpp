// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "atrl/partitioner.hpp"

namespace atrl {

enum class WeightingMode { kAtRl, kUniform, kRandom, kReverse, kHardTopP };

std::string_view to_string(WeightingMode mode) noexcept;
/// Accepts the CLI spellings: at-rl, uniform, random, reverse, hard.
std::optional<WeightingMode> parse_weighting_mode(std::string_view text) noexcept;

inline constexpr double kDefaultHardP = 0.15;
inline constexpr double kDegenerateStd = 1e-8;

/// Sequence advantage spread over tokens.
struct AdvantageSignal {
  double seq_adv = 0.0;
  std::vector<double> token_adv;
  WeightingMode mode = WeightingMode::kUniform;
};

struct SurrogateParams {
  double eps_low = 0.2;
  double eps_high = 0.2;
  double beta = 0.02;

  void validate() const;
};

/// w[k] = importance mass of cluster k / total mass; |C_k| / T when the total is 0.
std::vector<double> cluster_weights(std::span<const double> importance, const Clustering& clustering);

/// (R_i - mean) / population std; all zeros when std < 1e-8.
std::vector<double> group_advantage(std::span<const double> rewards);

/// token_adv[t] = w[cluster(t)] * seq_adv.
AdvantageSignal modulate(double seq_adv, std::span<const double> weights, const Clustering& clustering);

/// token_adv[t] = weights[t] * seq_adv for the per-token ablation modes.
AdvantageSignal scale_tokens(double seq_adv, std::span<const double> weights, WeightingMode mode);

/// Number of tokens kept by hard truncation: ceil(p * T).
std::size_t hard_keep_count(std::size_t n, double p);

/// Per-token weights for the ablation modes. kReverse runs the cluster-weight
/// step on max(C) - C and therefore needs `clustering`; kAtRl is not an
/// ablation and is rejected.
std::vector<double> ablation_weights(std::span<const double> connectivity, WeightingMode mode,
                                     double p, std::uint64_t seed,
                                     const Clustering* clustering = nullptr);

/// Reflected connectivity max(C) - C used by reverse weighting.
std::vector<double> reflect(std::span<const double> connectivity);

/// min(ratio * adv, clamp(ratio, 1 - eps_low, 1 + eps_high) * adv).
double clipped_term(double ratio, double adv, const SurrogateParams& params);

/// d clipped_term / d log(ratio).
double clipped_term_dlogratio(double ratio, double adv, const SurrogateParams& params);

/// One rollout as seen by the objectives.
struct SequenceTerms {
  std::span<const double> logp_new;
  std::span<const double> logp_old;
  std::span<const double> kl;  // empty means zero KL
  const AdvantageSignal* advantage = nullptr;
};

/// Group mean of per-sequence mean clipped terms minus beta times the group
/// mean of per-sequence mean KL.
double atrl_objective(std::span<const SequenceTerms> group, const SurrogateParams& params);

/// Group mean of sum_t A_t * log pi(a_t | s_t).
double reinforce_objective(std::span<const SequenceTerms> group);

}  // namespace atrl
