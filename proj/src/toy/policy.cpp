// SPDX-License-Identifier: Apache-2.0

#include "atrl/toy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "atrl/error.hpp"

namespace atrl::toy {
namespace {

double gaussian(std::mt19937_64& rng) {
  // Box-Muller on our own uniforms keeps initialisation identical across standard libraries.
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void log_softmax(std::span<double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  for (double& x : v) x -= lse;
}

}  // namespace

std::vector<double> ToyPolicy::symbol_mass(const ForwardCache& cache, std::size_t attn_at, TokenRange range) const {
  const std::size_t ctx = shape_.ctx_len();
  std::vector<double> mass(range.size(), 0.0);
  for (std::size_t h = 0; h < shape_.heads; ++h) {
    const double* a = cache.attn.data() + attn_at + h * ctx;
    for (std::size_t j = 0; j < shape_.slots; ++j) {
      const std::uint32_t sym = cache.slot_symbols[j];
      if (sym >= range.lo && sym < range.hi) mass[sym - range.lo] += a[j];
    }
  }
  for (double& m : mass) m /= static_cast<double>(shape_.heads);
  return mass;
}

std::string_view to_string(Grammar grammar) noexcept {
  switch (grammar) {
    case Grammar::kTemplate: return "template";
    case Grammar::kOpen: return "open";
    case Grammar::kFree: return "free";
  }
  return "unknown";
}

std::optional<Grammar> parse_grammar(std::string_view text) noexcept {
  if (text == "template") return Grammar::kTemplate;
  if (text == "open") return Grammar::kOpen;
  if (text == "free") return Grammar::kFree;
  return std::nullopt;
}

void PolicyShape::validate() const {
  if (slots == 0 || alphabet < 2 || fillers == 0 || dim == 0 || heads == 0) {
    throw Error(ErrorCode::kInvalidParameter, "toy policy needs slots, >= 2 symbols, fillers, dim and heads");
  }
  if (dim % heads != 0) throw Error(ErrorCode::kInvalidParameter, "dim must be a multiple of heads");
  if (!(head_init >= 0.0)) throw Error(ErrorCode::kInvalidParameter, "head init scale must be >= 0");
  if (pointer && !(pointer_floor > 0.0)) throw Error(ErrorCode::kInvalidParameter, "pointer floor must be > 0");
  if (max_len < 2) throw Error(ErrorCode::kInvalidParameter, "max_len must be at least 2");
  if (grammar != Grammar::kFree && reasoning_len + 2 > max_len) {
    throw Error(ErrorCode::kInvalidParameter, "template needs reasoning_len + 2 <= max_len");
  }
}

ToyPolicy::ToyPolicy(const PolicyShape& shape, std::uint64_t seed) : shape_(shape) {
  shape_.validate();
  const std::size_t d = shape_.dim;
  std::size_t off = 0;
  auto take = [&](std::size_t n) {
    const std::size_t at = off;
    off += n;
    return at;
  };
  at_.e_vis = take(shape_.alphabet * d);
  at_.p_slot = take(shape_.slots * d);
  at_.e_prompt = take(shape_.prompt_len * d);
  at_.e_tok = take(shape_.in_vocab() * d);
  at_.p_pos = take(shape_.max_len * d);
  at_.w_q = take(d * d);
  at_.w_k = take(d * d);
  at_.w_v = take(d * d);
  at_.w_o = take(d * d);
  at_.u = take(shape_.out_vocab() * d);
  at_.c = take(shape_.out_vocab());
  at_.gain = take(1);
  at_.total = off;
  params_.assign(at_.total, 0.0);

  std::mt19937_64 rng(seed);
  const double embed_std = std::sqrt(0.5);
  for (std::size_t i = at_.e_vis; i < at_.w_q; ++i) params_[i] = embed_std * gaussian(rng);
  if (shape_.ordinal_init != 0.0) {
    std::vector<double> dir(d);
    double norm = 0.0;
    for (double& x : dir) {
      x = gaussian(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    const double top = static_cast<double>(shape_.alphabet - 1);
    for (std::size_t s = 0; s < shape_.alphabet; ++s) {
      const double rank = 2.0 * static_cast<double>(s) / top - 1.0;
      for (std::size_t e = 0; e < d; ++e) params_[at_.e_vis + s * d + e] += shape_.ordinal_init * rank * dir[e] / norm;
    }
  }
  const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = at_.w_q; i < at_.u; ++i) params_[i] = w_std * gaussian(rng);
  // A small head keeps the untrained policy close to uniform over each allowed range.
  if (shape_.head_init > 0.0) {
    const double u_std = shape_.head_init / std::sqrt(static_cast<double>(d));
    for (std::size_t i = at_.u; i < at_.c; ++i) params_[i] = u_std * gaussian(rng);
  }
}

TokenRange ToyPolicy::allowed_at(std::size_t step, std::span<const std::uint32_t> prefix) const {
  const auto m = static_cast<std::uint32_t>(shape_.alphabet);
  const auto f = static_cast<std::uint32_t>(shape_.fillers);
  const TokenRange end{m + f, m + f + 1};
  if (shape_.grammar == Grammar::kOpen) {
    if (step < shape_.reasoning_len) return {0, m + f};
    return step == shape_.reasoning_len ? TokenRange{0, m} : end;
  }
  if (!prefix.empty() && shape_.is_symbol(prefix.back())) return end;
  if (shape_.grammar == Grammar::kTemplate) {
    if (step < shape_.reasoning_len) return {m, m + f};
    return {0, m};
  }
  if (step + 1 >= shape_.max_len) return end;
  return {0, m + f};
}

bool ToyPolicy::uses_head(std::uint32_t token) const {
  return shape_.symbol_head || !shape_.pointer || !shape_.is_symbol(token);
}

bool ToyPolicy::answers(std::size_t step, std::uint32_t token) const {
  if (!shape_.is_symbol(token)) return false;
  return shape_.grammar != Grammar::kOpen || step == shape_.reasoning_len;
}

void ToyPolicy::push_context(ForwardCache& cache, const double* row) const {
  const std::size_t d = shape_.dim;
  const double* wk = params_.data() + at_.w_k;
  const double* wv = params_.data() + at_.w_v;
  cache.y.insert(cache.y.end(), row, row + d);
  for (std::size_t i = 0; i < d; ++i) {
    double sk = 0.0, sv = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      sk += wk[i * d + j] * row[j];
      sv += wv[i * d + j] * row[j];
    }
    cache.k.push_back(sk);
    cache.v.push_back(sv);
  }
}

void ToyPolicy::step(ForwardCache& cache, std::size_t t, std::uint32_t input) const {
  const std::size_t d = shape_.dim;
  const std::size_t dh = shape_.head_dim();
  const std::size_t ctx = shape_.ctx_len();
  const std::size_t out = shape_.out_vocab();
  const double* p = params_.data();

  std::vector<double> x(d);
  for (std::size_t e = 0; e < d; ++e) {
    x[e] = p[at_.e_tok + input * d + e] + p[at_.p_pos + t * d + e];
  }
  cache.inputs.push_back(input);
  push_context(cache, x.data());
  const std::size_t rows = shape_.slots + shape_.prompt_len + t + 1;

  const std::size_t q_at = cache.q.size();
  for (std::size_t i = 0; i < d; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += p[at_.w_q + i * d + j] * x[j];
    cache.q.push_back(s);
  }
  const double* q = cache.q.data() + q_at;

  const std::size_t attn_at = cache.attn.size();
  cache.attn.resize(attn_at + shape_.heads * ctx, 0.0);
  const std::size_t mix_at = cache.mix.size();
  cache.mix.resize(mix_at + d, 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t h = 0; h < shape_.heads; ++h) {
    double* a = cache.attn.data() + attn_at + h * ctx;
    double mx = -INFINITY;
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) s += q[e] * cache.k[r * d + e];
      a[r] = s * scale;
      mx = std::max(mx, a[r]);
    }
    double sum = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      a[r] = std::exp(a[r] - mx);
      sum += a[r];
    }
    for (std::size_t r = 0; r < rows; ++r) a[r] /= sum;
    double* mix = cache.mix.data() + mix_at;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) mix[e] += a[r] * cache.v[r * d + e];
    }
  }

  const double* mix = cache.mix.data() + mix_at;
  for (std::size_t i = 0; i < d; ++i) {
    double s = shape_.residual_out ? x[i] : 0.0;
    for (std::size_t j = 0; j < d; ++j) s += p[at_.w_o + i * d + j] * mix[j];
    cache.z.push_back(s);
  }
  const double* z = cache.z.data() + t * d;

  const TokenRange range = allowed_at(t, std::span<const std::uint32_t>(cache.inputs).subspan(1));
  cache.allowed.push_back(range);
  const std::size_t lp_at = cache.logp.size();
  cache.logp.resize(lp_at + out, -INFINITY);
  std::span<double> logits(cache.logp.data() + lp_at + range.lo, range.size());
  for (std::uint32_t r = range.lo; r < range.hi; ++r) {
    if (!uses_head(r)) {
      logits[r - range.lo] = 0.0;
      continue;
    }
    double s = shape_.output_bias ? p[at_.c + r] : 0.0;
    for (std::size_t e = 0; e < d; ++e) s += p[at_.u + r * d + e] * z[e];
    logits[r - range.lo] = s;
  }
  if (shape_.pointer && range.lo < shape_.alphabet) {
    const std::vector<double> mass = symbol_mass(cache, attn_at, range);
    for (std::uint32_t r = range.lo; r < range.hi; ++r) {
      logits[r - range.lo] += p[at_.gain] * std::log(shape_.pointer_floor + mass[r - range.lo]);
    }
  }

  log_softmax(logits);
}

namespace {

ForwardCache start_cache(const PolicyShape& shape, const SyntheticScene& scene) {
  if (scene.slot_symbols.size() != shape.slots) {
    throw Error(ErrorCode::kLengthMismatch, "scene slot count differs from the policy's");
  }
  for (auto s : scene.slot_symbols) {
    if (s >= shape.alphabet) throw Error(ErrorCode::kIndexOutOfRange, "scene symbol outside the alphabet");
  }
  ForwardCache cache;
  cache.slot_symbols = scene.slot_symbols;
  return cache;
}

}  // namespace

Trajectory ToyPolicy::rollout(const SyntheticScene& scene, std::uint64_t rng_seed, bool greedy) const {
  const std::size_t d = shape_.dim;
  const std::size_t out = shape_.out_vocab();
  Trajectory traj;
  traj.cache = start_cache(shape_, scene);
  std::vector<double> row(d);
  for (std::size_t j = 0; j < shape_.slots; ++j) {
    for (std::size_t e = 0; e < d; ++e) {
      row[e] = params_[at_.e_vis + scene.slot_symbols[j] * d + e] + params_[at_.p_slot + j * d + e];
    }
    push_context(traj.cache, row.data());
  }
  for (std::size_t j = 0; j < shape_.prompt_len; ++j) push_context(traj.cache, params_.data() + at_.e_prompt + j * d);

  std::mt19937_64 rng(rng_seed);
  std::uint32_t input = shape_.bos_token();
  for (std::size_t t = 0; t < shape_.max_len; ++t) {
    step(traj.cache, t, input);
    const TokenRange range = traj.cache.allowed.back();
    const double* lp = traj.cache.logp.data() + t * out;
    std::uint32_t token = range.lo;
    if (greedy) {
      for (std::uint32_t r = range.lo + 1; r < range.hi; ++r) {
        if (lp[r] > lp[token]) token = r;
      }
    } else if (range.size() > 1) {
      const double u = uniform01(rng);
      double acc = 0.0;
      token = range.hi - 1;
      for (std::uint32_t r = range.lo; r < range.hi; ++r) {
        acc += std::exp(lp[r]);
        if (u < acc) {
          token = r;
          break;
        }
      }
    }
    traj.tokens.push_back(token);
    traj.logp.push_back(lp[token]);
    if (answers(t, token) && !traj.answer) traj.answer = token;
    if (token == shape_.end_token()) break;
    input = token;
  }
  return traj;
}

std::vector<Trajectory> ToyPolicy::rollout_group(const SyntheticScene& scene, std::size_t group,
                                                 std::uint64_t seed, bool greedy) const {
  std::vector<Trajectory> out;
  out.reserve(group);
  for (std::size_t g = 0; g < group; ++g) out.push_back(rollout(scene, derive_seed(seed, g), greedy));
  return out;
}

Trajectory ToyPolicy::evaluate(const SyntheticScene& scene, std::span<const std::uint32_t> tokens) const {
  const std::size_t d = shape_.dim;
  const std::size_t out = shape_.out_vocab();
  if (tokens.empty() || tokens.size() > shape_.max_len) {
    throw Error(ErrorCode::kInvalidParameter, "sequence length must lie in [1, max_len]");
  }
  Trajectory traj;
  traj.cache = start_cache(shape_, scene);
  std::vector<double> row(d);
  for (std::size_t j = 0; j < shape_.slots; ++j) {
    for (std::size_t e = 0; e < d; ++e) {
      row[e] = params_[at_.e_vis + scene.slot_symbols[j] * d + e] + params_[at_.p_slot + j * d + e];
    }
    push_context(traj.cache, row.data());
  }
  for (std::size_t j = 0; j < shape_.prompt_len; ++j) push_context(traj.cache, params_.data() + at_.e_prompt + j * d);
  std::uint32_t input = shape_.bos_token();
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    step(traj.cache, t, input);
    const TokenRange range = traj.cache.allowed.back();
    if (tokens[t] < range.lo || tokens[t] >= range.hi) {
      throw Error(ErrorCode::kInvalidParameter, "token " + std::to_string(tokens[t]) + " not allowed at step " +
                                                    std::to_string(t));
    }
    traj.tokens.push_back(tokens[t]);
    traj.logp.push_back(traj.cache.logp[t * out + tokens[t]]);
    if (answers(t, tokens[t]) && !traj.answer) traj.answer = tokens[t];
    input = tokens[t];
  }
  return traj;
}

AttentionTensor ToyPolicy::attention_tensor(const Trajectory& traj) const {
  const std::size_t ctx = shape_.ctx_len();
  const std::size_t steps = traj.length();
  auto tensor = AttentionTensor::zeros(1, static_cast<std::uint32_t>(shape_.heads),
                                       static_cast<std::uint32_t>(steps), static_cast<std::uint32_t>(ctx), true);
  for (std::size_t h = 0; h < shape_.heads; ++h) {
    for (std::size_t t = 0; t < steps; ++t) {
      const double* a = traj.cache.attn.data() + (t * shape_.heads + h) * ctx;
      for (std::size_t j = 0; j < ctx; ++j) tensor.at(0, h, t, j) = static_cast<float>(a[j]);
    }
  }
  return tensor;
}

std::vector<std::size_t> ToyPolicy::visual_columns() const {
  std::vector<std::size_t> cols(shape_.slots);
  for (std::size_t j = 0; j < shape_.slots; ++j) cols[j] = j;
  return cols;
}

void ToyPolicy::backward(const ForwardCache& cache, std::span<const std::vector<double>> dlogits,
                         std::span<double> grad) const {
  const std::size_t d = shape_.dim;
  const std::size_t dh = shape_.head_dim();
  const std::size_t ctx = shape_.ctx_len();
  const std::size_t steps = cache.allowed.size();
  const std::size_t base = shape_.slots + shape_.prompt_len;
  const std::size_t rows = base + steps;
  if (dlogits.size() != steps) throw Error(ErrorCode::kLengthMismatch, "one dlogit vector per step expected");
  if (grad.size() != params_.size()) throw Error(ErrorCode::kLengthMismatch, "gradient size differs from params");
  const double* p = params_.data();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<double> dy(rows * d, 0.0), dk(rows * d, 0.0), dv(rows * d, 0.0);
  std::vector<double> dz(d), dmix(d), dq(d), da(rows);
  for (std::size_t t = 0; t < steps; ++t) {
    const TokenRange range = cache.allowed[t];
    const auto& g = dlogits[t];
    if (g.size() != range.size()) throw Error(ErrorCode::kLengthMismatch, "dlogits do not match the allowed range");
    bool any = false;
    for (double v : g) any = any || v != 0.0;
    if (!any) continue;

    const double* z = cache.z.data() + t * d;
    std::fill(dz.begin(), dz.end(), 0.0);
    for (std::uint32_t r = range.lo; r < range.hi; ++r) {
      const double gr = g[r - range.lo];
      if (gr == 0.0 || !uses_head(r)) continue;
      if (shape_.output_bias) grad[at_.c + r] += gr;
      for (std::size_t e = 0; e < d; ++e) {
        grad[at_.u + r * d + e] += gr * z[e];
        dz[e] += gr * p[at_.u + r * d + e];
      }
    }
    double* dx = dy.data() + (base + t) * d;
    if (shape_.residual_out) {
      for (std::size_t e = 0; e < d; ++e) dx[e] += dz[e];
    }

    const double* mix = cache.mix.data() + t * d;
    std::fill(dmix.begin(), dmix.end(), 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        grad[at_.w_o + i * d + j] += dz[i] * mix[j];
        dmix[j] += p[at_.w_o + i * d + j] * dz[i];
      }
    }

    const double* q = cache.q.data() + t * d;
    std::fill(dq.begin(), dq.end(), 0.0);
    const std::size_t live = base + t + 1;
    const bool pointing = shape_.pointer && range.lo < shape_.alphabet;
    // d logit_r / d mass_r, folded with the upstream gradient.
    std::vector<double> dmass;
    if (pointing) {
      const std::vector<double> mass = symbol_mass(cache, t * shape_.heads * ctx, range);
      dmass.resize(mass.size());
      for (std::size_t r = 0; r < mass.size(); ++r) {
        const double lm = std::log(shape_.pointer_floor + mass[r]);
        grad[at_.gain] += g[r] * lm;
        dmass[r] = g[r] * p[at_.gain] / (shape_.pointer_floor + mass[r]) / static_cast<double>(shape_.heads);
      }
    }
    for (std::size_t h = 0; h < shape_.heads; ++h) {
      const double* a = cache.attn.data() + (t * shape_.heads + h) * ctx;
      double dot = 0.0;
      for (std::size_t r = 0; r < live; ++r) {
        double s = 0.0;
        if (pointing && r < shape_.slots) {
          const std::uint32_t sym = cache.slot_symbols[r];
          if (sym >= range.lo && sym < range.hi) s += dmass[sym - range.lo];
        }
        for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) {
          s += dmix[e] * cache.v[r * d + e];
          dv[r * d + e] += a[r] * dmix[e];
        }
        da[r] = s;
        dot += a[r] * s;
      }
      for (std::size_t r = 0; r < live; ++r) {
        const double ds = a[r] * (da[r] - dot) * scale;
        for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) {
          dq[e] += ds * cache.k[r * d + e];
          dk[r * d + e] += ds * q[e];
        }
      }
    }
    const double* x = cache.y.data() + (base + t) * d;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        grad[at_.w_q + i * d + j] += dq[i] * x[j];
        dx[j] += p[at_.w_q + i * d + j] * dq[i];
      }
    }
  }

  for (std::size_t r = 0; r < rows; ++r) {
    const double* yr = cache.y.data() + r * d;
    double* dyr = dy.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double gk = dk[r * d + i];
      const double gv = dv[r * d + i];
      if (gk == 0.0 && gv == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        grad[at_.w_k + i * d + j] += gk * yr[j];
        grad[at_.w_v + i * d + j] += gv * yr[j];
        dyr[j] += p[at_.w_k + i * d + j] * gk + p[at_.w_v + i * d + j] * gv;
      }
    }
  }

  for (std::size_t r = 0; r < rows; ++r) {
    const double* dyr = dy.data() + r * d;
    std::size_t a1 = 0, a2 = 0;
    bool two = true;
    if (r < shape_.slots) {
      a1 = at_.e_vis + cache.slot_symbols[r] * d;
      a2 = at_.p_slot + r * d;
    } else if (r < base) {
      a1 = at_.e_prompt + (r - shape_.slots) * d;
      two = false;
    } else {
      const std::size_t t = r - base;
      a1 = at_.e_tok + cache.inputs[t] * d;
      a2 = at_.p_pos + t * d;
    }
    for (std::size_t e = 0; e < d; ++e) {
      grad[a1 + e] += dyr[e];
      if (two) grad[a2 + e] += dyr[e];
    }
  }
}

double categorical_kl(std::span<const double> logp, std::span<const double> logq) {
  if (logp.size() != logq.size()) throw Error(ErrorCode::kLengthMismatch, "KL over different supports");
  double kl = 0.0;
  for (std::size_t i = 0; i < logp.size(); ++i) kl += std::exp(logp[i]) * (logp[i] - logq[i]);
  return kl;
}

}  // namespace atrl::toy
