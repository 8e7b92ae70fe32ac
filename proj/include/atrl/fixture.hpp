// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "atrl/tensor_io.hpp"

namespace atrl {

/// Synthetic attention whose calibrated connectivity is known in advance.
struct ConnectivityFixture {
  AttentionTensor tensor;
  TokenMeta meta;
  std::vector<double> target;  // C the default pipeline recovers, per generated token
};

/// 540 generated tokens, 16 visual + 16 language context columns, two heads.
/// The connectivity has a long right tail: 81 tokens lie above the
/// linear-interpolated 85th percentile (about 0.0368).
ConnectivityFixture make_anchor_fixture(std::uint64_t seed = 0);

/// Connectivity targets of the fixture above, in token order.
std::vector<double> anchor_targets(std::uint64_t seed = 0);

/// Row-stochastic attention built from `topics` peaked prototype footprints;
/// each row mixes one prototype with noise, so rows sharing a topic are
/// similar. The first `visual` context columns are treated as visual.
AttentionTensor make_topic_attention(std::uint32_t layers, std::uint32_t heads, std::uint32_t gen_len,
                                     std::uint32_t ctx_len, std::size_t topics, std::uint64_t seed);

TokenMeta make_meta(std::size_t ctx_len, std::size_t visual);

}  // namespace atrl
