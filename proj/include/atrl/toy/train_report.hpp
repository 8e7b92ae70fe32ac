// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "atrl/toy/trainer.hpp"

namespace atrl::toy {

/// Everything a train-toy / ablate / sweep invocation produced.
struct TrainReport {
  std::vector<std::pair<std::string, std::string>> config;  // flattened key/value echo
  std::vector<VariantReport> variants;
};

/// Key/value echo of a training configuration, in a stable order.
std::vector<std::pair<std::string, std::string>> describe(const TrainConfig& config);

/// JSON document; doubles keep full precision so reading it back is exact.
std::string dump_train_report(const TrainReport& report);
TrainReport parse_train_report(const std::string& text);
void save_train_report(const TrainReport& report, const std::filesystem::path& path);
TrainReport load_train_report(const std::filesystem::path& path);

bool operator==(const ToyTimings& a, const ToyTimings& b) noexcept;
bool operator==(const AnchorStats& a, const AnchorStats& b) noexcept;
/// Compares everything that is serialised (final_params is not).
bool same_serialised(const TrainReport& a, const TrainReport& b) noexcept;

}  // namespace atrl::toy
