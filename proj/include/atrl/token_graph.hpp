// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "atrl/calib.hpp"

namespace atrl {

inline constexpr double kDefaultTauSim = 0.7;

struct Edge {
  std::uint32_t u;  // u < v
  std::uint32_t v;
  double w;
};

struct Neighbor {
  std::uint32_t node;
  double w;
};

/// Sparse weighted undirected graph over generated tokens.
///
/// Immutable once built. Edges are kept sorted by (u, v); adjacency lists are
/// sorted by neighbour index.
class TokenGraph {
 public:
  TokenGraph() = default;

  /// Throws on self-loops, duplicates, out-of-range endpoints, non-finite
  /// weights or weights not strictly above `tau_sim`.
  TokenGraph(std::size_t n, std::vector<Edge> edges,
             double tau_sim = -std::numeric_limits<double>::infinity());

  std::size_t size() const noexcept { return adjacency_.size(); }
  double tau_sim() const noexcept { return tau_sim_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::span<const Neighbor> neighbors(std::size_t t) const { return adjacency_.at(t); }

  double weighted_degree(std::size_t t) const;
  double total_weight() const noexcept { return total_weight_; }

 private:
  double tau_sim_ = -std::numeric_limits<double>::infinity();
  std::vector<Edge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
  std::vector<double> degree_;
  double total_weight_ = 0.0;
};

/// Cosine similarity of rows i and j; 0 when either row has zero norm.
double footprint_similarity(const CalibratedMatrix& calibrated, std::size_t i, std::size_t j);

/// Edge (i, j) iff footprint_similarity(i, j) > tau_sim.
TokenGraph build_graph(const CalibratedMatrix& calibrated, double tau_sim = kDefaultTauSim);

/// Adjacency-list text: node count, then one "i j w" line per edge (w to 9 significant digits).
void write_adjacency(const TokenGraph& graph, std::ostream& out);
TokenGraph read_adjacency(std::istream& in);

}  // namespace atrl
