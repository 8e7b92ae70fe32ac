// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "atrl/config.hpp"
#include "atrl/pipeline.hpp"
#include "atrl/toy/policy.hpp"

namespace atrl::toy {

enum class Optimizer { kSgd, kAdam };

std::string_view to_string(Optimizer opt) noexcept;
std::optional<Optimizer> parse_optimizer(std::string_view text) noexcept;

struct TrainConfig {
  PolicyShape shape;
  PipelineConfig pipeline;  // mode, engine, surrogate, group size and every credit knob
  std::size_t prompts_per_step = 16;
  double lr = 5e-3;
  std::size_t steps = 200;
  std::vector<std::uint64_t> seeds{0};
  Optimizer optimizer = Optimizer::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double reward_threshold = 0.9;
  std::size_t window = 10;  // trailing steps averaged for threshold and final reward

  void validate() const;
  double effective_beta() const noexcept;
};

/// Cumulative wall-clock seconds per training stage.
struct ToyTimings {
  double rollout = 0.0;
  StageTimings credit;
  double objective = 0.0;  // advantages, reference pass and backward
  double update = 0.0;
  double total = 0.0;

  ToyTimings& operator+=(const ToyTimings& other) noexcept;
};

/// Connectivity statistics pooled over the last step's trajectories.
struct AnchorStats {
  std::size_t tokens = 0;
  double threshold = 0.0;   // 85th percentile of C
  std::size_t above = 0;
  double answer_mean_c = 0.0;
  double other_mean_c = 0.0;

  double anchor_fraction() const noexcept {
    return tokens == 0 ? 0.0 : static_cast<double>(above) / static_cast<double>(tokens);
  }
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<double> reward;        // mean reward of all rollouts, per step
  std::vector<std::uint64_t> digest; // parameter checksum after each update
  std::optional<std::size_t> steps_to_threshold;  // 1-based step count
  double final_reward = 0.0;
  AnchorStats anchors;
  ToyTimings timings;
  std::vector<double> final_params;  // not serialised
};

struct VariantReport {
  std::string label;
  WeightingMode mode = WeightingMode::kAtRl;
  Engine engine = Engine::kGrpo;
  double hard_p = kDefaultHardP;
  double beta = 0.0;
  std::size_t steps = 0;
  std::vector<SeedRun> runs;

  double mean_final_reward() const noexcept;
};

/// Toy-specific keys (steps, lr, dim, ...) in a stable order; apply_train_setting
/// also accepts every pipeline key and forwards it.
const std::vector<std::string>& train_keys();
void apply_train_setting(TrainConfig& config, std::string_view key, std::string_view value);
std::string get_train_setting(const TrainConfig& config, std::string_view key);

/// "0..9" (inclusive), "0,3,5" or a single seed.
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

/// Trailing-window mean of a reward curve ending at `end` (exclusive).
double trailing_mean(const std::vector<double>& curve, std::size_t end, std::size_t window);

SeedRun train_seed(const TrainConfig& config, std::uint64_t seed);
VariantReport train(const TrainConfig& config, std::string label = {});

/// FNV-1a over the parameter bytes.
std::uint64_t param_digest(std::span<const double> params) noexcept;

/// Mean reward of sampled rollouts over `scenes` fresh scenes.
double mean_reward(const ToyPolicy& policy, std::size_t scenes, std::uint64_t seed);

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coords = 0;
  double objective = 0.0;
};

/// Central finite differences of the training objective against the analytic
/// gradient, at the rollout policy (all ratios 1). The output head is moved
/// off zero first so every parameter block carries gradient; the untouched
/// initialisation serves as the KL reference.
GradCheckResult grad_check(const TrainConfig& config, std::uint64_t seed, std::size_t coords = 20,
                           double h = 1e-5);

}  // namespace atrl::toy
