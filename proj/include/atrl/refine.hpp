// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "atrl/calib.hpp"
#include "atrl/partitioner.hpp"
#include "atrl/token_graph.hpp"

namespace atrl {

/// How the central nodes of neighbourhood expansion are ranked.
enum class CentralBy { kDegree, kPhi };

struct RefineParams {
  double tau_cen = 0.75;
  double alpha = 0.6;
  double q = 0.15;
  std::size_t r_neighbors = 4;
  double lambda_sim = 0.5;
  double lambda_imp = 0.5;
  double tau_nb = 0.65;
  CentralBy central_by = CentralBy::kDegree;

  void validate() const;
};

/// Mean of the member rows.
std::vector<double> centroid(const CalibratedMatrix& calibrated,
                             std::span<const std::uint32_t> members);

/// Attenuates phi[t] by alpha when row t has cosine < tau_cen to its cluster centroid.
std::vector<double> denoise(const CalibratedMatrix& calibrated, const Clustering& clustering,
                            std::span<const double> phi, const RefineParams& params);

/// Number of central nodes for n tokens: ceil(q * n), at least one when q > 0.
std::size_t central_count(std::size_t n, double q);

/// Central nodes promote up to R heaviest-edge neighbours t' whose
/// lambda_sim * cos(t', t) + lambda_imp * phi_hat[t'] exceeds tau_nb, where
/// phi_hat is phi divided by its maximum. A promoted token takes
/// max(phi[t'], phi[t]). All tests use the pre-expansion phi.
std::vector<double> expand(const TokenGraph& graph, const CalibratedMatrix& calibrated,
                           std::span<const double> phi, const RefineParams& params);

}  // namespace atrl
