// SPDX-License-Identifier: Apache-2.0

#include "atrl/token_graph.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "atrl/error.hpp"
#include "atrl/report.hpp"

namespace atrl {

TokenGraph::TokenGraph(std::size_t n, std::vector<Edge> edges, double tau_sim)
    : tau_sim_(tau_sim), edges_(std::move(edges)), adjacency_(n), degree_(n, 0.0) {
  for (auto& e : edges_) {
    if (e.u > e.v) std::swap(e.u, e.v);
    if (e.v >= n) {
      throw Error(ErrorCode::kIndexOutOfRange, "edge endpoint " + std::to_string(e.v) +
                                                   " >= n=" + std::to_string(n));
    }
    if (e.u == e.v) throw Error(ErrorCode::kMalformedInput, "self-loop on node " + std::to_string(e.u));
    if (!std::isfinite(e.w) || !(e.w > tau_sim_)) {
      throw Error(ErrorCode::kMalformedInput, "edge weight must be finite and above tau_sim");
    }
  }
  std::sort(edges_.begin(), edges_.end(),
            [](const Edge& a, const Edge& b) { return a.u != b.u ? a.u < b.u : a.v < b.v; });
  for (std::size_t k = 1; k < edges_.size(); ++k) {
    if (edges_[k].u == edges_[k - 1].u && edges_[k].v == edges_[k - 1].v) {
      throw Error(ErrorCode::kMalformedInput, "duplicate edge " + std::to_string(edges_[k].u) +
                                                  "-" + std::to_string(edges_[k].v));
    }
  }
  for (const auto& e : edges_) {
    adjacency_[e.u].push_back({e.v, e.w});
    adjacency_[e.v].push_back({e.u, e.w});
    degree_[e.u] += e.w;
    degree_[e.v] += e.w;
    total_weight_ += e.w;
  }
  for (auto& adj : adjacency_) {
    std::sort(adj.begin(), adj.end(),
              [](const Neighbor& a, const Neighbor& b) { return a.node < b.node; });
  }
}

double TokenGraph::weighted_degree(std::size_t t) const {
  if (t >= degree_.size()) {
    throw Error(ErrorCode::kIndexOutOfRange, "node " + std::to_string(t) + " >= n=" +
                                                 std::to_string(degree_.size()));
  }
  return degree_[t];
}

double footprint_similarity(const CalibratedMatrix& calibrated, std::size_t i, std::size_t j) {
  if (i >= calibrated.rows() || j >= calibrated.rows()) {
    throw Error(ErrorCode::kIndexOutOfRange, "token index out of range");
  }
  const auto a = calibrated.row(i);
  const auto b = calibrated.row(j);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

TokenGraph build_graph(const CalibratedMatrix& calibrated, double tau_sim) {
  if (!(tau_sim >= 0.0 && tau_sim < 1.0)) {
    throw Error(ErrorCode::kInvalidParameter, "tau_sim must lie in [0, 1)");
  }
  const std::size_t t = calibrated.rows();
  const std::size_t s = calibrated.cols();

  // Normalise rows once so the pairwise pass is plain dot products.
  Matrix unit(t, s);
  std::vector<char> nonzero(t, 0);
  for (std::size_t i = 0; i < t; ++i) {
    const auto src = calibrated.row(i);
    double norm = 0.0;
    for (double v : src) norm += v * v;
    if (norm == 0.0) continue;
    nonzero[i] = 1;
    const double inv = 1.0 / std::sqrt(norm);
    auto dst = unit.row(i);
    for (std::size_t k = 0; k < s; ++k) dst[k] = src[k] * inv;
  }

  std::vector<Edge> edges;
  for (std::size_t i = 0; i < t; ++i) {
    if (!nonzero[i]) continue;
    const double* a = unit.row(i).data();
    for (std::size_t j = i + 1; j < t; ++j) {
      if (!nonzero[j]) continue;
      const double* b = unit.row(j).data();
      double dot = 0.0;
      for (std::size_t k = 0; k < s; ++k) dot += a[k] * b[k];
      if (dot > tau_sim) {
        edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), dot});
      }
    }
  }
  return TokenGraph(t, std::move(edges), tau_sim);
}

void write_adjacency(const TokenGraph& graph, std::ostream& out) {
  out << graph.size() << '\n';
  for (const auto& e : graph.edges()) out << e.u << ' ' << e.v << ' ' << format_g9(e.w) << '\n';
}

TokenGraph read_adjacency(std::istream& in) {
  std::size_t n = 0;
  if (!(in >> n)) throw Error(ErrorCode::kMalformedInput, "adjacency list missing node count");
  std::vector<Edge> edges;
  std::uint64_t u = 0, v = 0;
  double w = 0.0;
  while (in >> u >> v >> w) {
    if (u >= n || v >= n) throw Error(ErrorCode::kIndexOutOfRange, "edge endpoint out of range");
    edges.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v), w});
  }
  if (!in.eof()) throw Error(ErrorCode::kMalformedInput, "trailing garbage in adjacency list");
  return TokenGraph(n, std::move(edges));
}

}  // namespace atrl
