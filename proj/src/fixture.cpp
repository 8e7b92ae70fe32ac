// SPDX-License-Identifier: Apache-2.0

#include "atrl/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "atrl/calib.hpp"
#include "atrl/error.hpp"

namespace atrl {
namespace {

constexpr std::size_t kTokens = 540;
constexpr std::size_t kVisual = 16;
constexpr std::size_t kLanguage = 16;
constexpr std::size_t kBelow = 459;  // sorted positions 0..458 sit at or under the threshold
constexpr double kLastBelow = 0.03678;
constexpr double kFirstAbove = 0.03690;

double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Positive weights summing to `mass`.
void spread(std::mt19937_64& rng, double mass, std::span<double> out) {
  double sum = 0.0;
  for (double& w : out) {
    const double u = u01(rng);
    w = 0.05 + u * u;
    sum += w;
  }
  for (double& w : out) w *= mass / sum;
}

}  // namespace

std::vector<double> anchor_targets(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5eedc0ffeeULL);
  std::vector<double> c;
  c.reserve(kTokens);
  // Bulk: right-skewed in [0.002, 0.0366].
  for (std::size_t i = 0; i + 1 < kBelow; ++i) {
    const double u = u01(rng);
    c.push_back(0.002 + 0.0346 * u * u);
  }
  c.push_back(kLastBelow);
  c.push_back(kFirstAbove);
  // Tail: exponential excess above 0.037, capped.
  for (std::size_t i = kBelow + 1; i < kTokens; ++i) {
    const double e = -std::log(1.0 - u01(rng));
    c.push_back(std::min(0.037 + 0.03 * e, 0.25));
  }
  std::shuffle(c.begin(), c.end(), rng);
  return c;
}

TokenMeta make_meta(std::size_t ctx_len, std::size_t visual) {
  if (visual > ctx_len) throw Error(ErrorCode::kInvalidParameter, "more visual columns than context");
  TokenMeta meta;
  meta.ctx_modality.assign(ctx_len, Modality::kLanguage);
  std::fill_n(meta.ctx_modality.begin(), visual, Modality::kVision);
  return meta;
}

ConnectivityFixture make_anchor_fixture(std::uint64_t seed) {
  ConnectivityFixture fx;
  fx.target = anchor_targets(seed);
  const std::size_t ctx = kVisual + kLanguage;
  fx.meta = make_meta(ctx, kVisual);
  fx.tensor = AttentionTensor::zeros(1, 2, kTokens, ctx, true);
  // The default pipeline divides row i by b_i, so the visual mass is target * b.
  const auto b = bias_curve(kTokens, BiasParams{});
  std::mt19937_64 rng(seed ^ 0xa11c0de5ULL);
  std::vector<double> row(ctx), shift(kLanguage);
  for (std::size_t i = 0; i < kTokens; ++i) {
    const double visual_mass = fx.target[i] * b[i];
    spread(rng, visual_mass, std::span<double>(row).first(kVisual));
    spread(rng, 1.0 - visual_mass, std::span<double>(row).subspan(kVisual));
    // The two heads disagree on pairs of language columns, in opposite
    // directions, and average back to `row`.
    for (std::size_t j = 0; j < kLanguage; j += 2) {
      const double d = 0.25 * std::min(row[kVisual + j], row[kVisual + j + 1]) * (2.0 * u01(rng) - 1.0);
      shift[j] = d;
      shift[j + 1] = -d;
    }
    for (std::size_t j = 0; j < ctx; ++j) {
      const double s = j < kVisual ? 0.0 : shift[j - kVisual];
      fx.tensor.at(0, 0, i, j) = static_cast<float>(row[j] + s);
      fx.tensor.at(0, 1, i, j) = static_cast<float>(row[j] - s);
    }
  }
  fx.tensor.validate();
  return fx;
}

AttentionTensor make_topic_attention(std::uint32_t layers, std::uint32_t heads, std::uint32_t gen_len,
                                     std::uint32_t ctx_len, std::size_t topics, std::uint64_t seed) {
  if (topics == 0) throw Error(ErrorCode::kInvalidParameter, "need at least one topic");
  auto tensor = AttentionTensor::zeros(layers, heads, gen_len, ctx_len, true);
  std::mt19937_64 rng(seed);
  // Each prototype concentrates on a handful of context positions.
  std::vector<std::vector<double>> proto(topics, std::vector<double>(ctx_len, 0.0));
  const std::size_t peaks = std::max<std::size_t>(1, ctx_len / 32);
  for (auto& p : proto) {
    for (std::size_t k = 0; k < peaks; ++k) p[static_cast<std::size_t>(u01(rng) * ctx_len)] += 0.5 + u01(rng);
  }
  std::vector<std::size_t> topic_of(gen_len);
  for (auto& t : topic_of) t = static_cast<std::size_t>(u01(rng) * static_cast<double>(topics));
  std::vector<double> row(ctx_len);
  for (std::uint32_t l = 0; l < layers; ++l) {
    for (std::uint32_t h = 0; h < heads; ++h) {
      for (std::uint32_t i = 0; i < gen_len; ++i) {
        double sum = 0.0;
        const auto& p = proto[topic_of[i]];
        for (std::uint32_t j = 0; j < ctx_len; ++j) {
          const double u = u01(rng);
          row[j] = p[j] + 0.02 * u * u * u;
          sum += row[j];
        }
        for (std::uint32_t j = 0; j < ctx_len; ++j) tensor.at(l, h, i, j) = static_cast<float>(row[j] / sum);
      }
    }
  }
  return tensor;
}

}  // namespace atrl
