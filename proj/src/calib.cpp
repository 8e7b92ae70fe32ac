// SPDX-License-Identifier: Apache-2.0

#include "atrl/calib.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "atrl/error.hpp"

namespace atrl {

void BiasParams::validate() const {
  if (!(lambda_exp >= 0.0) || !std::isfinite(lambda_exp)) {
    throw Error(ErrorCode::kInvalidParameter, "lambda_exp must be finite and >= 0");
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw Error(ErrorCode::kInvalidParameter, "gamma must be finite and > 0");
  }
  if (!(lambda_cos >= 0.0) || !std::isfinite(lambda_cos)) {
    throw Error(ErrorCode::kInvalidParameter, "lambda_cos must be finite and >= 0");
  }
}

CalibratedMatrix aggregate(const AttentionTensor& tensor, std::size_t top_layers) {
  if (top_layers < 1 || top_layers > tensor.layers) {
    throw Error(ErrorCode::kTopLayersOutOfRange,
                "top_layers=" + std::to_string(top_layers) + " with L=" +
                    std::to_string(tensor.layers));
  }
  const std::size_t t = tensor.gen_len;
  const std::size_t s = tensor.ctx_len;
  CalibratedMatrix out(t, s);
  auto& acc = out.data();
  for (std::size_t l = tensor.layers - top_layers; l < tensor.layers; ++l) {
    for (std::size_t h = 0; h < tensor.heads; ++h) {
      const float* src = tensor.values.data() + tensor.offset(l, h, 0, 0);
      for (std::size_t k = 0; k < t * s; ++k) acc[k] += src[k];
    }
  }
  const double scale = 1.0 / static_cast<double>(top_layers * tensor.heads);
  for (double& v : acc) v *= scale;
  return out;
}

std::vector<double> bias_curve(std::size_t n, const BiasParams& params) {
  params.validate();
  if (n == 0) return {};
  std::vector<double> b(n);
  double sum = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    const double p = static_cast<double>(j) / static_cast<double>(n);
    const double raw = 1.0 + params.lambda_exp * std::exp(-p * params.gamma) +
                       params.lambda_cos * std::cos(std::numbers::pi * p);
    b[j - 1] = std::max(raw, kBiasFloor);
    sum += b[j - 1];
  }
  const double mean = sum / static_cast<double>(n);
  for (double& v : b) v = std::max(v / mean, kBiasFloor);
  return b;
}

CalibratedMatrix debias(const CalibratedMatrix& aggregated, std::span<const double> bias,
                        BiasAxis axis) {
  const std::size_t expected = axis == BiasAxis::kGenerated ? aggregated.rows() : aggregated.cols();
  if (bias.size() != expected) {
    throw Error(ErrorCode::kLengthMismatch, "bias length " + std::to_string(bias.size()) +
                                                " but axis length " + std::to_string(expected));
  }
  for (double b : bias) {
    if (!(b >= kBiasFloor) || !std::isfinite(b)) {
      throw Error(ErrorCode::kInvalidParameter, "bias entries must be finite and >= 1e-6");
    }
  }
  CalibratedMatrix out = aggregated;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    if (axis == BiasAxis::kGenerated) {
      for (double& v : row) v /= bias[i];
    } else {
      for (std::size_t j = 0; j < row.size(); ++j) row[j] /= bias[j];
    }
  }
  return out;
}

std::vector<double> connectivity(const CalibratedMatrix& calibrated,
                                 std::span<const std::size_t> visual) {
  if (visual.empty()) throw Error(ErrorCode::kEmptyVisualSet, "no context position is labelled v");
  for (std::size_t j : visual) {
    if (j >= calibrated.cols()) {
      throw Error(ErrorCode::kIndexOutOfRange, "visual index " + std::to_string(j) +
                                                   " >= S=" + std::to_string(calibrated.cols()));
    }
  }
  std::vector<double> c(calibrated.rows(), 0.0);
  for (std::size_t i = 0; i < calibrated.rows(); ++i) {
    const auto row = calibrated.row(i);
    double sum = 0.0;
    for (std::size_t j : visual) sum += row[j];
    c[i] = sum;
  }
  return c;
}

}  // namespace atrl
