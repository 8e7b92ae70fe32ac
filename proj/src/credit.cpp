// SPDX-License-Identifier: Apache-2.0

#include "atrl/credit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "atrl/error.hpp"

namespace atrl {

std::string_view to_string(WeightingMode mode) noexcept {
  switch (mode) {
    case WeightingMode::kAtRl: return "at-rl";
    case WeightingMode::kUniform: return "uniform";
    case WeightingMode::kRandom: return "random";
    case WeightingMode::kReverse: return "reverse";
    case WeightingMode::kHardTopP: return "hard";
  }
  return "unknown";
}

std::optional<WeightingMode> parse_weighting_mode(std::string_view text) noexcept {
  if (text == "at-rl" || text == "at_rl") return WeightingMode::kAtRl;
  if (text == "uniform") return WeightingMode::kUniform;
  if (text == "random") return WeightingMode::kRandom;
  if (text == "reverse") return WeightingMode::kReverse;
  if (text == "hard" || text == "hard_top_p") return WeightingMode::kHardTopP;
  return std::nullopt;
}

void SurrogateParams::validate() const {
  if (!(eps_low > 0.0 && eps_low < 1.0) || !(eps_high > 0.0 && eps_high < 1.0)) {
    throw Error(ErrorCode::kInvalidParameter, "clip bounds must lie in (0, 1)");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw Error(ErrorCode::kInvalidParameter, "beta must be finite and >= 0");
  }
}

std::vector<double> cluster_weights(std::span<const double> importance, const Clustering& clustering) {
  if (importance.size() != clustering.assignment.size()) {
    throw Error(ErrorCode::kLengthMismatch, "importance length differs from clustering");
  }
  const std::size_t k = clustering.k;
  if (k == 1) return {1.0};
  std::vector<double> mass(k, 0.0);
  std::vector<double> count(k, 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < importance.size(); ++t) {
    mass[clustering.assignment[t]] += importance[t];
    count[clustering.assignment[t]] += 1.0;
    total += importance[t];
  }
  std::vector<double> w(k);
  if (total > 0.0) {
    for (std::size_t c = 0; c < k; ++c) w[c] = mass[c] / total;
  } else {
    const double n = static_cast<double>(importance.size());
    for (std::size_t c = 0; c < k; ++c) w[c] = count[c] / n;
  }
  return w;
}

std::vector<double> group_advantage(std::span<const double> rewards) {
  if (rewards.size() < 2) throw Error(ErrorCode::kGroupTooSmall, "group needs at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / n);
  std::vector<double> adv(rewards.size(), 0.0);
  if (std_dev < kDegenerateStd) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / std_dev;
  return adv;
}

AdvantageSignal modulate(double seq_adv, std::span<const double> weights, const Clustering& clustering) {
  if (weights.size() != clustering.k) {
    throw Error(ErrorCode::kKMismatch, "got " + std::to_string(weights.size()) +
                                           " weights for K=" + std::to_string(clustering.k));
  }
  AdvantageSignal out;
  out.seq_adv = seq_adv;
  out.mode = WeightingMode::kAtRl;
  out.token_adv.resize(clustering.assignment.size());
  for (std::size_t t = 0; t < out.token_adv.size(); ++t) {
    out.token_adv[t] = weights[clustering.assignment[t]] * seq_adv;
  }
  return out;
}

AdvantageSignal scale_tokens(double seq_adv, std::span<const double> weights, WeightingMode mode) {
  AdvantageSignal out;
  out.seq_adv = seq_adv;
  out.mode = mode;
  out.token_adv.resize(weights.size());
  for (std::size_t t = 0; t < weights.size(); ++t) out.token_adv[t] = weights[t] * seq_adv;
  return out;
}

std::size_t hard_keep_count(std::size_t n, double p) {
  // p * n is computed in binary floating point; 0.15 * 540 must give 81, not 82.
  const auto count = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) - 1e-9));
  return std::min(count, n);
}

std::vector<double> reflect(std::span<const double> connectivity) {
  std::vector<double> out(connectivity.begin(), connectivity.end());
  if (out.empty()) return out;
  const double top = *std::max_element(out.begin(), out.end());
  for (double& v : out) v = top - v;
  return out;
}

std::vector<double> ablation_weights(std::span<const double> connectivity, WeightingMode mode,
                                     double p, std::uint64_t seed, const Clustering* clustering) {
  const std::size_t n = connectivity.size();
  switch (mode) {
    case WeightingMode::kUniform:
      return std::vector<double>(n, 1.0);
    case WeightingMode::kRandom: {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      std::vector<double> out(n);
      for (double& v : out) v = unit(rng);
      return out;
    }
    case WeightingMode::kHardTopP: {
      if (!(p > 0.0 && p <= 1.0)) throw Error(ErrorCode::kBadFraction, "hard-truncation p must lie in (0, 1]");
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return connectivity[a] > connectivity[b];
      });
      std::vector<double> out(n, 0.0);
      const std::size_t keep = hard_keep_count(n, p);
      for (std::size_t r = 0; r < keep; ++r) out[idx[r]] = 1.0;
      return out;
    }
    case WeightingMode::kReverse: {
      if (clustering == nullptr) {
        throw Error(ErrorCode::kInvalidParameter, "reverse weighting needs a clustering");
      }
      const auto w = cluster_weights(reflect(connectivity), *clustering);
      std::vector<double> out(n);
      for (std::size_t t = 0; t < n; ++t) out[t] = w[clustering->assignment[t]];
      return out;
    }
    case WeightingMode::kAtRl:
      break;
  }
  throw Error(ErrorCode::kInvalidParameter, "at-rl weights come from modulate(), not ablation_weights()");
}

double clipped_term(double ratio, double adv, const SurrogateParams& params) {
  if (!(ratio > 0.0)) throw Error(ErrorCode::kNonPositiveRatio, "probability ratio must be > 0");
  const double clipped = std::clamp(ratio, 1.0 - params.eps_low, 1.0 + params.eps_high);
  return std::min(ratio * adv, clipped * adv);
}

double clipped_term_dlogratio(double ratio, double adv, const SurrogateParams& params) {
  if (!(ratio > 0.0)) throw Error(ErrorCode::kNonPositiveRatio, "probability ratio must be > 0");
  const double clipped = std::clamp(ratio, 1.0 - params.eps_low, 1.0 + params.eps_high);
  // The unclipped branch is active when it attains the minimum; d(ratio)/d(log ratio) = ratio.
  return ratio * adv <= clipped * adv ? ratio * adv : 0.0;
}

namespace {

void check_lengths(const SequenceTerms& s, bool need_old) {
  if (s.advantage == nullptr) throw Error(ErrorCode::kInvalidParameter, "sequence without advantages");
  const std::size_t n = s.logp_new.size();
  if ((need_old && s.logp_old.size() != n) || s.advantage->token_adv.size() != n ||
      (!s.kl.empty() && s.kl.size() != n)) {
    throw Error(ErrorCode::kLengthMismatch, "per-token vectors of one sequence differ in length");
  }
}

}  // namespace

double atrl_objective(std::span<const SequenceTerms> group, const SurrogateParams& params) {
  params.validate();
  if (group.empty()) return 0.0;
  double surrogate = 0.0;
  double kl = 0.0;
  for (const auto& s : group) {
    check_lengths(s, true);
    const std::size_t n = s.logp_new.size();
    if (n == 0) continue;
    double seq = 0.0;
    double seq_kl = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ratio = std::exp(s.logp_new[t] - s.logp_old[t]);
      seq += clipped_term(ratio, s.advantage->token_adv[t], params);
      if (!s.kl.empty()) seq_kl += s.kl[t];
    }
    surrogate += seq / static_cast<double>(n);
    kl += seq_kl / static_cast<double>(n);
  }
  const double g = static_cast<double>(group.size());
  return surrogate / g - params.beta * (kl / g);
}

double reinforce_objective(std::span<const SequenceTerms> group) {
  if (group.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : group) {
    check_lengths(s, false);
    double seq = 0.0;
    for (std::size_t t = 0; t < s.logp_new.size(); ++t) seq += s.advantage->token_adv[t] * s.logp_new[t];
    total += seq;
  }
  return total / static_cast<double>(group.size());
}

}  // namespace atrl
