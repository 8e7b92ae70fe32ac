// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "atrl/matrix.hpp"
#include "atrl/tensor_io.hpp"

namespace atrl {

/// T x S attention footprint after aggregation and, optionally, debiasing.
using CalibratedMatrix = Matrix;

/// Parametric positional bias: b_j = 1 + lambda_exp * exp(-p_j * gamma) + lambda_cos * cos(pi * p_j).
struct BiasParams {
  double lambda_exp = 0.15;
  double gamma = 4.0;
  double lambda_cos = 0.05;

  void validate() const;
};

/// Which axis of the aggregated matrix the bias curve divides.
///
/// kGenerated divides row i by b_i (curve over T generated positions).
/// kContext divides column j by b_j (curve over S context positions).
enum class BiasAxis { kGenerated, kContext };

inline constexpr double kBiasFloor = 1e-6;
inline constexpr std::size_t kDefaultTopLayers = 4;

/// Mean over the last `top_layers` layers and all heads, in double precision.
CalibratedMatrix aggregate(const AttentionTensor& tensor, std::size_t top_layers);

/// Mean-normalised bias curve of length n with p_j = j / n, j = 1..n.
std::vector<double> bias_curve(std::size_t n, const BiasParams& params);

CalibratedMatrix debias(const CalibratedMatrix& aggregated, std::span<const double> bias,
                        BiasAxis axis = BiasAxis::kGenerated);

/// C_i = sum of row i over the visual context positions.
std::vector<double> connectivity(const CalibratedMatrix& calibrated,
                                 std::span<const std::size_t> visual);

}  // namespace atrl
