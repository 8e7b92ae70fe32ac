// SPDX-License-Identifier: Apache-2.0

#include "atrl/partitioner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "atrl/error.hpp"

namespace atrl {
namespace {

constexpr double kGainEps = 1e-12;
constexpr int kInitialTries = 8;
constexpr int kMaxRefinePasses = 32;
constexpr std::size_t kMinCoarsestSize = 32;

struct WorkGraph {
  std::vector<std::int64_t> vweight;
  std::vector<std::vector<Neighbor>> adj;

  std::size_t size() const { return vweight.size(); }
};

WorkGraph from_token_graph(const TokenGraph& g) {
  WorkGraph w;
  w.vweight.assign(g.size(), 1);
  w.adj.resize(g.size());
  for (std::size_t u = 0; u < g.size(); ++u) {
    const auto nb = g.neighbors(u);
    w.adj[u].assign(nb.begin(), nb.end());
  }
  return w;
}

// Heavy-edge matching: nodes visited in seeded random order, each matched to
// its heaviest unmatched neighbour (ties by lowest index).
WorkGraph coarsen(const WorkGraph& g, std::int64_t max_vweight, std::mt19937_64& rng,
                  std::vector<std::uint32_t>& fine_to_coarse) {
  const std::size_t n = g.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::shuffle(order.begin(), order.end(), rng);

  constexpr std::uint32_t kUnmatched = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> mate(n, kUnmatched);
  for (std::uint32_t u : order) {
    if (mate[u] != kUnmatched) continue;
    std::uint32_t best = kUnmatched;
    double best_w = -1.0;
    for (const auto& [v, w] : g.adj[u]) {
      if (mate[v] != kUnmatched || g.vweight[u] + g.vweight[v] > max_vweight) continue;
      if (w > best_w || (w == best_w && v < best)) {
        best = v;
        best_w = w;
      }
    }
    if (best == kUnmatched) {
      mate[u] = u;
    } else {
      mate[u] = best;
      mate[best] = u;
    }
  }

  fine_to_coarse.assign(n, kUnmatched);
  std::uint32_t next = 0;
  for (std::uint32_t u = 0; u < n; ++u) {
    if (fine_to_coarse[u] != kUnmatched) continue;
    fine_to_coarse[u] = next;
    fine_to_coarse[mate[u]] = next;
    ++next;
  }

  WorkGraph c;
  c.vweight.assign(next, 0);
  c.adj.resize(next);
  std::vector<double> acc(next, 0.0);
  std::vector<std::uint32_t> touched;
  std::vector<std::vector<std::uint32_t>> members(next);
  for (std::uint32_t u = 0; u < n; ++u) {
    c.vweight[fine_to_coarse[u]] += g.vweight[u];
    members[fine_to_coarse[u]].push_back(u);
  }
  for (std::uint32_t cu = 0; cu < next; ++cu) {
    touched.clear();
    for (std::uint32_t u : members[cu]) {
      for (const auto& [v, w] : g.adj[u]) {
        const std::uint32_t cv = fine_to_coarse[v];
        if (cv == cu) continue;
        if (acc[cv] == 0.0) touched.push_back(cv);
        acc[cv] += w;
      }
    }
    std::sort(touched.begin(), touched.end());
    for (std::uint32_t cv : touched) {
      c.adj[cu].push_back({cv, acc[cv]});
      acc[cv] = 0.0;
    }
  }
  return c;
}

class Refiner {
 public:
  Refiner(const WorkGraph& g, std::size_t k, std::int64_t cap, std::vector<std::uint32_t>& part)
      : g_(g), k_(k), cap_(cap), part_(part) {}

  void run() {
    rebalance();
    for (int pass = 0; pass < kMaxRefinePasses; ++pass) {
      rebuild();
      bool improved = single_moves();
      rebuild();
      improved = swaps() || improved;
      if (!improved) break;
    }
  }

  // Restores non-empty clusters and the size cap with the cheapest moves
  // available; may leave a violation when coarse vertex weights make it infeasible.
  void rebalance() {
    rebuild();
    for (std::size_t guard = 0; guard < 4 * g_.size() + 8; ++guard) {
      std::size_t empty = k_;
      for (std::size_t p = 0; p < k_; ++p) {
        if (count_[p] == 0) {
          empty = p;
          break;
        }
      }
      std::size_t heavy = k_;
      for (std::size_t p = 0; p < k_; ++p) {
        if (pweight_[p] > cap_ && (heavy == k_ || pweight_[p] > pweight_[heavy])) heavy = p;
      }
      if (empty == k_ && heavy == k_) return;

      std::uint32_t best_u = 0;
      std::size_t best_p = k_;
      double best_loss = std::numeric_limits<double>::infinity();
      for (std::uint32_t u = 0; u < g_.size(); ++u) {
        const std::size_t a = part_[u];
        if (count_[a] <= 1) continue;
        if (empty != k_) {
          // Fill the empty cluster from any cluster that keeps a node.
          const double loss = conn(u, a) - conn(u, empty);
          if (loss < best_loss - kGainEps) {
            best_loss = loss;
            best_u = u;
            best_p = empty;
          }
        } else if (a == heavy) {
          for (std::size_t p = 0; p < k_; ++p) {
            if (p == a || pweight_[p] + g_.vweight[u] > cap_) continue;
            const double loss = conn(u, a) - conn(u, p);
            if (loss < best_loss - kGainEps) {
              best_loss = loss;
              best_u = u;
              best_p = p;
            }
          }
        }
      }
      if (best_p == k_) return;
      move(best_u, best_p);
    }
  }

 private:
  double conn(std::uint32_t u, std::size_t p) const { return conn_[u * k_ + p]; }

  void rebuild() {
    conn_.assign(g_.size() * k_, 0.0);
    pweight_.assign(k_, 0);
    count_.assign(k_, 0);
    for (std::uint32_t u = 0; u < g_.size(); ++u) {
      pweight_[part_[u]] += g_.vweight[u];
      ++count_[part_[u]];
      for (const auto& [v, w] : g_.adj[u]) conn_[u * k_ + part_[v]] += w;
    }
  }

  void move(std::uint32_t u, std::size_t to) {
    const std::size_t from = part_[u];
    for (const auto& [v, w] : g_.adj[u]) {
      conn_[v * k_ + from] -= w;
      conn_[v * k_ + to] += w;
    }
    pweight_[from] -= g_.vweight[u];
    pweight_[to] += g_.vweight[u];
    --count_[from];
    ++count_[to];
    part_[u] = static_cast<std::uint32_t>(to);
  }

  bool single_moves() {
    bool improved = false;
    for (std::uint32_t u = 0; u < g_.size(); ++u) {
      const std::size_t a = part_[u];
      if (count_[a] <= 1) continue;
      std::size_t best_p = k_;
      double best_gain = kGainEps;
      for (std::size_t p = 0; p < k_; ++p) {
        if (p == a || pweight_[p] + g_.vweight[u] > cap_) continue;
        const double gain = conn(u, p) - conn(u, a);
        if (gain > best_gain) {
          best_gain = gain;
          best_p = p;
        }
      }
      if (best_p != k_) {
        move(u, best_p);
        improved = true;
      }
    }
    return improved;
  }

  double edge_weight(std::uint32_t u, std::uint32_t v) const {
    const auto& adj = g_.adj[u];
    auto it = std::lower_bound(adj.begin(), adj.end(), v,
                               [](const Neighbor& nb, std::uint32_t x) { return nb.node < x; });
    return (it != adj.end() && it->node == v) ? it->w : 0.0;
  }

  // A swap gains gu + gv - 2 w(u, v) <= gu + gv, so one endpoint must have a
  // positive single-move gain; only those nodes are scanned as `u`.
  bool swaps() {
    bool improved = false;
    for (std::uint32_t u = 0; u < g_.size(); ++u) {
      const std::size_t a = part_[u];
      std::uint32_t best_v = 0;
      double best_gain = kGainEps;
      bool found = false;
      for (std::size_t p = 0; p < k_; ++p) {
        if (p == a) continue;
        const double gu = conn(u, p) - conn(u, a);
        if (gu <= 0.0) continue;
        for (std::uint32_t v = 0; v < g_.size(); ++v) {
          if (part_[v] != p) continue;
          if (pweight_[a] - g_.vweight[u] + g_.vweight[v] > cap_ ||
              pweight_[p] - g_.vweight[v] + g_.vweight[u] > cap_) {
            continue;
          }
          const double gain = gu + conn(v, a) - conn(v, p) - 2.0 * edge_weight(u, v);
          if (gain > best_gain) {
            best_gain = gain;
            best_v = v;
            found = true;
          }
        }
      }
      if (found) {
        const std::size_t pv = part_[best_v];
        move(u, pv);
        move(best_v, a);
        improved = true;
      }
    }
    return improved;
  }

  const WorkGraph& g_;
  std::size_t k_;
  std::int64_t cap_;
  std::vector<std::uint32_t>& part_;
  std::vector<double> conn_;
  std::vector<std::int64_t> pweight_;
  std::vector<std::size_t> count_;
};

double work_cut(const WorkGraph& g, const std::vector<std::uint32_t>& part) {
  double cut = 0.0;
  for (std::uint32_t u = 0; u < g.size(); ++u) {
    for (const auto& [v, w] : g.adj[u]) {
      if (u < v && part[u] != part[v]) cut += w;
    }
  }
  return cut;
}

// Greedy graph growing. Each cluster grows from a seed by absorbing the
// unassigned node most connected to it until it reaches its share of the
// total vertex weight; isolated nodes go to the currently lightest cluster.
std::vector<std::uint32_t> grow_initial(const WorkGraph& g, std::size_t k, bool random_seeds,
                                        std::mt19937_64& rng) {
  const std::size_t n = g.size();
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> part(n, kNone);
  const std::int64_t total = std::accumulate(g.vweight.begin(), g.vweight.end(), std::int64_t{0});

  std::vector<char> isolated(n, 0);
  for (std::size_t u = 0; u < n; ++u) isolated[u] = g.adj[u].empty();

  auto pick_seed = [&]() -> std::uint32_t {
    std::vector<std::uint32_t> free;
    for (std::uint32_t u = 0; u < n; ++u) {
      if (part[u] == kNone && !isolated[u]) free.push_back(u);
    }
    if (free.empty()) return kNone;
    if (!random_seeds) return free.front();
    std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
    return free[pick(rng)];
  };

  std::int64_t assigned = 0;
  std::vector<double> gain(n, 0.0);
  for (std::size_t p = 0; p + 1 < k; ++p) {
    const auto target = static_cast<std::int64_t>(
        std::llround(static_cast<double>(total) * static_cast<double>(p + 1) / static_cast<double>(k)));
    std::int64_t weight = 0;
    std::fill(gain.begin(), gain.end(), 0.0);
    while (assigned + weight < target) {
      std::uint32_t best = kNone;
      double best_gain = 0.0;
      for (std::uint32_t u = 0; u < n; ++u) {
        if (part[u] == kNone && gain[u] > best_gain) {
          best = u;
          best_gain = gain[u];
        }
      }
      if (best == kNone) best = pick_seed();
      if (best == kNone) break;
      part[best] = static_cast<std::uint32_t>(p);
      weight += g.vweight[best];
      for (const auto& [v, w] : g.adj[best]) gain[v] += w;
    }
    assigned += weight;
  }
  for (std::uint32_t u = 0; u < n; ++u) {
    if (part[u] == kNone && !isolated[u]) part[u] = static_cast<std::uint32_t>(k - 1);
  }

  std::vector<std::int64_t> pweight(k, 0);
  for (std::uint32_t u = 0; u < n; ++u) {
    if (part[u] != kNone) pweight[part[u]] += g.vweight[u];
  }
  for (std::uint32_t u = 0; u < n; ++u) {
    if (part[u] != kNone) continue;
    const auto lightest = static_cast<std::uint32_t>(
        std::min_element(pweight.begin(), pweight.end()) - pweight.begin());
    part[u] = lightest;
    pweight[lightest] += g.vweight[u];
  }
  return part;
}

}  // namespace

std::vector<std::size_t> Clustering::sizes() const {
  std::vector<std::size_t> out(k, 0);
  for (auto c : assignment) ++out[c];
  return out;
}

std::vector<std::vector<std::uint32_t>> Clustering::members() const {
  std::vector<std::vector<std::uint32_t>> out(k);
  for (std::uint32_t t = 0; t < assignment.size(); ++t) out[assignment[t]].push_back(t);
  return out;
}

std::size_t cluster_count(std::size_t gen_len) {
  if (gen_len <= 1) return 1;
  return std::max<std::size_t>(2, gen_len / 10);
}

std::size_t max_cluster_size(std::size_t n, std::size_t k, double eps_bal) {
  const std::size_t ideal = (n + k - 1) / k;
  const auto cap = static_cast<std::size_t>(
      std::floor((1.0 + eps_bal) * static_cast<double>(ideal) + 1e-9));
  return std::max(cap, ideal);
}

double edge_cut(const TokenGraph& graph, std::span<const std::uint32_t> assignment) {
  if (assignment.size() != graph.size()) {
    throw Error(ErrorCode::kLengthMismatch, "assignment length " + std::to_string(assignment.size()) +
                                                " != n=" + std::to_string(graph.size()));
  }
  double cut = 0.0;
  for (const auto& e : graph.edges()) {
    if (assignment[e.u] != assignment[e.v]) cut += e.w;
  }
  return cut;
}

double balance_of(std::span<const std::uint32_t> assignment, std::size_t k) {
  if (assignment.empty() || k == 0) return 0.0;
  std::vector<std::size_t> sizes(k, 0);
  for (auto c : assignment) ++sizes.at(c);
  const std::size_t ideal = (assignment.size() + k - 1) / k;
  return static_cast<double>(*std::max_element(sizes.begin(), sizes.end())) /
         static_cast<double>(ideal);
}

Clustering make_clustering(const TokenGraph& graph, std::vector<std::uint32_t> assignment,
                           std::size_t k) {
  if (assignment.size() != graph.size()) {
    throw Error(ErrorCode::kLengthMismatch, "assignment does not cover every token");
  }
  std::vector<std::size_t> sizes(k, 0);
  for (auto c : assignment) {
    if (c >= k) throw Error(ErrorCode::kIndexOutOfRange, "cluster id " + std::to_string(c) + " >= K");
    ++sizes[c];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] == 0) throw Error(ErrorCode::kEmptyCluster, "cluster " + std::to_string(c) + " is empty");
  }
  Clustering out;
  out.k = k;
  out.edge_cut = edge_cut(graph, assignment);
  out.balance = balance_of(assignment, k);
  out.assignment = std::move(assignment);
  return out;
}

Clustering partition(const TokenGraph& graph, std::size_t k, double eps_bal, std::uint64_t seed) {
  const std::size_t n = graph.size();
  if (k == 0) throw Error(ErrorCode::kInvalidParameter, "K must be at least 1");
  if (k > n) {
    throw Error(ErrorCode::kTooManyClusters, "K=" + std::to_string(k) + " > n=" + std::to_string(n));
  }
  if (!(eps_bal >= 0.0) || !std::isfinite(eps_bal)) {
    throw Error(ErrorCode::kInvalidParameter, "eps_bal must be finite and >= 0");
  }
  if (k == 1) return make_clustering(graph, std::vector<std::uint32_t>(n, 0), 1);

  std::mt19937_64 rng(seed);
  const auto cap = static_cast<std::int64_t>(max_cluster_size(n, k, eps_bal));
  const std::size_t ideal = (n + k - 1) / k;
  const auto max_vweight = std::max<std::int64_t>(1, static_cast<std::int64_t>((ideal + 3) / 4));

  std::vector<WorkGraph> levels;
  std::vector<std::vector<std::uint32_t>> maps;
  levels.push_back(from_token_graph(graph));
  const std::size_t coarsest_target = std::max(4 * k, kMinCoarsestSize);
  while (levels.back().size() > coarsest_target) {
    std::vector<std::uint32_t> map;
    WorkGraph coarse = coarsen(levels.back(), max_vweight, rng, map);
    if (coarse.size() * 20 > levels.back().size() * 19) break;  // matching stalled
    maps.push_back(std::move(map));
    levels.push_back(std::move(coarse));
  }

  const WorkGraph& coarsest = levels.back();
  std::vector<std::uint32_t> best;
  double best_cut = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < kInitialTries; ++attempt) {
    auto part = grow_initial(coarsest, k, attempt > 0, rng);
    Refiner(coarsest, k, cap, part).run();
    const double cut = work_cut(coarsest, part);
    if (cut < best_cut - kGainEps) {
      best_cut = cut;
      best = std::move(part);
    }
  }

  std::vector<std::uint32_t> part = std::move(best);
  for (std::size_t level = levels.size() - 1; level > 0; --level) {
    const auto& map = maps[level - 1];
    std::vector<std::uint32_t> fine(map.size());
    for (std::size_t u = 0; u < map.size(); ++u) fine[u] = part[map[u]];
    part = std::move(fine);
    Refiner(levels[level - 1], k, cap, part).run();
  }

  Clustering out = make_clustering(graph, std::move(part), k);
  if (out.balance * static_cast<double>(ideal) > static_cast<double>(cap) + 1e-9) {
    throw Error(ErrorCode::kInvariantViolation, "partition exceeds the balance cap");
  }
  return out;
}

}  // namespace atrl
