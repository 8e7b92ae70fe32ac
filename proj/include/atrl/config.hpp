// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "atrl/calib.hpp"
#include "atrl/credit.hpp"
#include "atrl/partitioner.hpp"
#include "atrl/refine.hpp"
#include "atrl/token_graph.hpp"

namespace atrl {

enum class Engine { kGrpo, kGrpoKlFree, kReinforce };

std::string_view to_string(Engine engine) noexcept;
std::optional<Engine> parse_engine(std::string_view text) noexcept;

/// Every pipeline hyperparameter. Unset optionals resolve from the input
/// (top_layers -> min(4, L), k -> cluster_count(T)).
struct PipelineConfig {
  std::optional<std::size_t> top_layers;
  BiasParams bias;
  BiasAxis bias_axis = BiasAxis::kGenerated;
  double tau_sim = kDefaultTauSim;
  std::optional<std::size_t> k;
  double eps_bal = kDefaultEpsBal;
  std::uint64_t seed = 0;
  RefineParams refine;
  WeightingMode mode = WeightingMode::kAtRl;
  double hard_p = kDefaultHardP;
  SurrogateParams surrogate;
  Engine engine = Engine::kGrpo;
  std::size_t group_size = 8;
  std::size_t histogram_bins = 50;

  void validate() const;
  std::size_t resolve_top_layers(std::size_t layers) const;
  std::size_t resolve_k(std::size_t gen_len) const;
};

/// Flat key=value configuration. Keys use the CLI flag spelling without the
/// leading dashes (e.g. "tau-sim = 0.7"); '#' starts a comment.
using KeyValues = std::map<std::string, std::string, std::less<>>;

KeyValues parse_key_values(std::string_view text);
KeyValues load_key_values(const std::filesystem::path& path);

/// Applies one key to the config; throws Error(kInvalidParameter) for unknown
/// keys or unparsable values.
void apply_setting(PipelineConfig& config, std::string_view key, std::string_view value);
void apply_settings(PipelineConfig& config, const KeyValues& values);

/// Keys apply_setting() understands, in a stable order.
const std::vector<std::string>& pipeline_keys();

/// Current value of a key, formatted the way apply_setting() parses it.
std::string get_setting(const PipelineConfig& config, std::string_view key);

}  // namespace atrl
