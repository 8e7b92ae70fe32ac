// SPDX-License-Identifier: Apache-2.0

#include "atrl/refine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "atrl/error.hpp"

namespace atrl {
namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Indices of the `count` largest scores, ties by lowest index.
std::vector<std::size_t> top_indices(std::span<const double> score, std::size_t count) {
  std::vector<std::size_t> idx(score.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  idx.resize(std::min(count, idx.size()));
  return idx;
}

}  // namespace

void RefineParams::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(tau_cen)) throw Error(ErrorCode::kInvalidParameter, "tau_cen must be finite");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::kInvalidParameter, "alpha must lie in (0, 1]");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorCode::kBadFraction, "q must lie in [0, 1]");
  if (!finite(lambda_sim) || !finite(lambda_imp) || !finite(tau_nb)) {
    throw Error(ErrorCode::kInvalidParameter, "expansion weights must be finite");
  }
}

std::vector<double> centroid(const CalibratedMatrix& calibrated,
                             std::span<const std::uint32_t> members) {
  if (members.empty()) throw Error(ErrorCode::kEmptyCluster, "centroid of an empty cluster");
  std::vector<double> c(calibrated.cols(), 0.0);
  for (auto t : members) {
    if (t >= calibrated.rows()) throw Error(ErrorCode::kIndexOutOfRange, "member index out of range");
    const auto row = calibrated.row(t);
    for (std::size_t j = 0; j < c.size(); ++j) c[j] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (double& v : c) v *= inv;
  return c;
}

std::vector<double> denoise(const CalibratedMatrix& calibrated, const Clustering& clustering,
                            std::span<const double> phi, const RefineParams& params) {
  params.validate();
  const std::size_t t_len = calibrated.rows();
  if (phi.size() != t_len || clustering.assignment.size() != t_len) {
    throw Error(ErrorCode::kLengthMismatch, "phi, clustering and calibrated rows must agree on T");
  }
  std::vector<double> out(phi.begin(), phi.end());
  const auto members = clustering.members();
  for (const auto& cluster : members) {
    if (cluster.empty()) continue;
    const auto c = centroid(calibrated, cluster);
    for (auto t : cluster) {
      if (cosine(calibrated.row(t), c) < params.tau_cen) out[t] = params.alpha * phi[t];
    }
  }
  return out;
}

std::size_t central_count(std::size_t n, double q) {
  if (n == 0 || q <= 0.0) return 0;
  const auto count = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(count, 1, n);
}

std::vector<double> expand(const TokenGraph& graph, const CalibratedMatrix& calibrated,
                           std::span<const double> phi, const RefineParams& params) {
  params.validate();
  const std::size_t n = graph.size();
  if (calibrated.rows() != n || phi.size() != n) {
    throw Error(ErrorCode::kLengthMismatch, "graph, phi and calibrated rows must agree on T");
  }
  std::vector<double> out(phi.begin(), phi.end());
  const std::size_t count = central_count(n, params.q);
  if (count == 0) return out;

  std::vector<double> score(n);
  for (std::size_t t = 0; t < n; ++t) {
    score[t] = params.central_by == CentralBy::kDegree ? graph.weighted_degree(t) : phi[t];
  }
  const double phi_max = phi.empty() ? 0.0 : *std::max_element(phi.begin(), phi.end());

  for (std::size_t center : top_indices(score, count)) {
    std::vector<Neighbor> nb(graph.neighbors(center).begin(), graph.neighbors(center).end());
    std::stable_sort(nb.begin(), nb.end(),
                     [](const Neighbor& a, const Neighbor& b) { return a.w > b.w; });
    if (nb.size() > params.r_neighbors) nb.resize(params.r_neighbors);
    for (const auto& [other, w] : nb) {
      const double phi_hat = phi_max > 0.0 ? phi[other] / phi_max : 0.0;
      const double sim = cosine(calibrated.row(other), calibrated.row(center));
      if (params.lambda_sim * sim + params.lambda_imp * phi_hat > params.tau_nb) {
        out[other] = std::max(out[other], std::max(phi[other], phi[center]));
      }
    }
  }
  return out;
}

}  // namespace atrl
