// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "atrl/token_graph.hpp"

namespace atrl {

inline constexpr double kDefaultEpsBal = 0.1;

/// Token -> cluster assignment produced by partition().
struct Clustering {
  std::vector<std::uint32_t> assignment;
  std::size_t k = 0;
  double edge_cut = 0.0;
  /// Largest cluster size divided by the ideal size ceil(n / k).
  double balance = 0.0;

  std::vector<std::size_t> sizes() const;
  std::vector<std::vector<std::uint32_t>> members() const;
};

/// max(2, floor(T / 10)), or 1 for a single token.
std::size_t cluster_count(std::size_t gen_len);

/// Largest admissible cluster size: floor((1 + eps_bal) * ceil(n / k)).
std::size_t max_cluster_size(std::size_t n, std::size_t k, double eps_bal);

double edge_cut(const TokenGraph& graph, std::span<const std::uint32_t> assignment);
double balance_of(std::span<const std::uint32_t> assignment, std::size_t k);

/// Wraps an assignment after checking ids, non-empty clusters and length.
Clustering make_clustering(const TokenGraph& graph, std::vector<std::uint32_t> assignment,
                           std::size_t k);

/// Multilevel k-way partition minimising edge cut subject to
/// max cluster size <= max_cluster_size(n, k, eps_bal). Deterministic per seed.
Clustering partition(const TokenGraph& graph, std::size_t k, double eps_bal = kDefaultEpsBal,
                     std::uint64_t seed = 0);

}  // namespace atrl
