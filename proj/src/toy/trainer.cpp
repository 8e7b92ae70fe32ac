// SPDX-License-Identifier: Apache-2.0

#include "atrl/toy/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <random>

#include "atrl/error.hpp"
#include "atrl/report.hpp"

namespace atrl::toy {
namespace {

using Clock = std::chrono::steady_clock;

// Stream tags for derive_seed.
constexpr std::uint64_t kSceneStream = 1;
constexpr std::uint64_t kRolloutStream = 2;
constexpr std::uint64_t kCreditStream = 3;
constexpr std::uint64_t kInitStream = 4;

struct Batch {
  std::vector<SyntheticScene> scenes;
  std::vector<std::vector<Trajectory>> groups;
  std::vector<std::vector<AdvantageSignal>> signals;
  std::vector<std::vector<std::vector<std::vector<double>>>> ref_logp;  // [b][g][t] over the allowed range
  std::vector<std::vector<CreditResult>> credit;
  double mean_reward = 0.0;
};

std::vector<double> range_logp(const Trajectory& traj, std::size_t t, std::size_t out) {
  const TokenRange r = traj.cache.allowed[t];
  const double* lp = traj.cache.logp.data() + t * out;
  return {lp + r.lo, lp + r.hi};
}

void fill_reference(const ToyPolicy& ref, Batch& batch) {
  const std::size_t out = ref.shape().out_vocab();
  batch.ref_logp.assign(batch.groups.size(), {});
  for (std::size_t b = 0; b < batch.groups.size(); ++b) {
    for (const auto& traj : batch.groups[b]) {
      const Trajectory r = ref.evaluate(batch.scenes[b], traj.tokens);
      std::vector<std::vector<double>> per_step;
      for (std::size_t t = 0; t < traj.length(); ++t) per_step.push_back(range_logp(r, t, out));
      batch.ref_logp[b].push_back(std::move(per_step));
    }
  }
}

// Rollouts, rewards, group advantages and token credit for one step.
Batch collect(const ToyPolicy& policy, const TrainConfig& config, std::uint64_t seed, std::size_t step,
              ToyTimings& timings) {
  const std::size_t prompts = config.prompts_per_step;
  const std::size_t group = config.pipeline.group_size;
  Batch batch;
  auto start = Clock::now();
  for (std::size_t b = 0; b < prompts; ++b) {
    batch.scenes.push_back(gen_scene(derive_seed(seed, kSceneStream, step, b), config.shape.slots,
                                     config.shape.alphabet));
    batch.groups.push_back(
        policy.rollout_group(batch.scenes.back(), group, derive_seed(seed, kRolloutStream, step, b)));
  }
  timings.rollout += seconds_since(start);

  const auto visual = policy.visual_columns();
  double reward_sum = 0.0;
  batch.signals.resize(prompts);
  batch.credit.resize(prompts);
  for (std::size_t b = 0; b < prompts; ++b) {
    std::vector<double> rewards;
    for (const auto& traj : batch.groups[b]) rewards.push_back(verify(traj.answer, batch.scenes[b]));
    for (double r : rewards) reward_sum += r;
    const auto adv = group_advantage(rewards);
    for (std::size_t g = 0; g < group; ++g) {
      const auto& traj = batch.groups[b][g];
      const AttentionTensor tensor = policy.attention_tensor(traj);
      CreditResult credit = run_credit_pipeline(tensor, visual, config.pipeline,
                                                derive_seed(seed, kCreditStream, step, b * group + g));
      timings.credit += credit.timings;
      batch.signals[b].push_back(apply_credit(credit, adv[g], config.pipeline.mode));
      batch.credit[b].push_back(std::move(credit));
    }
  }
  batch.mean_reward = reward_sum / static_cast<double>(prompts * group);
  return batch;
}

// Per-step d(objective)/d(logit) for one trajectory whose cache was produced
// by `policy` (the old policy, so every ratio is exactly 1).
std::vector<std::vector<double>> trajectory_dlogits(const Trajectory& traj, const AdvantageSignal& signal,
                                                    const std::vector<std::vector<double>>* ref,
                                                    const TrainConfig& config, double beta, double scale,
                                                    std::size_t out) {
  const std::size_t n = traj.length();
  const bool reinforce = config.pipeline.engine == Engine::kReinforce;
  std::vector<std::vector<double>> dl(n);
  for (std::size_t t = 0; t < n; ++t) {
    const TokenRange r = traj.cache.allowed[t];
    const double* lp = traj.cache.logp.data() + t * out;
    dl[t].assign(r.size(), 0.0);
    if (r.size() < 2) continue;
    const double coef = reinforce ? signal.token_adv[t] * scale
                                  : clipped_term_dlogratio(1.0, signal.token_adv[t], config.pipeline.surrogate) *
                                        scale / static_cast<double>(n);
    for (std::uint32_t k = r.lo; k < r.hi; ++k) {
      dl[t][k - r.lo] = coef * ((k == traj.tokens[t] ? 1.0 : 0.0) - std::exp(lp[k]));
    }
    if (beta > 0.0 && ref != nullptr) {
      const auto& lq = (*ref)[t];
      const std::vector<double> lpr(lp + r.lo, lp + r.hi);
      const double kl = categorical_kl(lpr, lq);
      const double kscale = beta * scale / static_cast<double>(n);
      for (std::size_t k = 0; k < r.size(); ++k) {
        dl[t][k] -= kscale * std::exp(lpr[k]) * (lpr[k] - lq[k] - kl);
      }
    }
  }
  return dl;
}

void accumulate_gradient(const ToyPolicy& policy, const Batch& batch, const TrainConfig& config, double beta,
                         std::vector<double>& grad) {
  const std::size_t out = policy.shape().out_vocab();
  const double scale =
      1.0 / static_cast<double>(batch.groups.size() * config.pipeline.group_size);
  for (std::size_t b = 0; b < batch.groups.size(); ++b) {
    for (std::size_t g = 0; g < batch.groups[b].size(); ++g) {
      const auto& traj = batch.groups[b][g];
      const auto* ref = batch.ref_logp.empty() ? nullptr : &batch.ref_logp[b][g];
      const auto dl = trajectory_dlogits(traj, batch.signals[b][g], ref, config, beta, scale, out);
      policy.backward(traj.cache, dl, grad);
    }
  }
}

// The training objective re-evaluated under `policy`, with the batch's
// log-probs as the old policy.
double objective_value(const ToyPolicy& policy, const Batch& batch, const TrainConfig& config, double beta) {
  const std::size_t out = policy.shape().out_vocab();
  SurrogateParams params = config.pipeline.surrogate;
  params.beta = beta;
  double total = 0.0;
  for (std::size_t b = 0; b < batch.groups.size(); ++b) {
    std::vector<Trajectory> fresh;
    std::vector<std::vector<double>> kls;
    for (std::size_t g = 0; g < batch.groups[b].size(); ++g) {
      const auto& traj = batch.groups[b][g];
      fresh.push_back(policy.evaluate(batch.scenes[b], traj.tokens));
      std::vector<double> kl(traj.length(), 0.0);
      if (beta > 0.0) {
        for (std::size_t t = 0; t < traj.length(); ++t) {
          kl[t] = categorical_kl(range_logp(fresh.back(), t, out), batch.ref_logp[b][g][t]);
        }
      }
      kls.push_back(std::move(kl));
    }
    std::vector<SequenceTerms> terms;
    for (std::size_t g = 0; g < fresh.size(); ++g) {
      terms.push_back({fresh[g].logp, batch.groups[b][g].logp, kls[g], &batch.signals[b][g]});
    }
    total += config.pipeline.engine == Engine::kReinforce ? reinforce_objective(terms)
                                                           : atrl_objective(terms, params);
  }
  return total / static_cast<double>(batch.groups.size());
}

AnchorStats anchor_stats(const Batch& batch, const PolicyShape& shape) {
  AnchorStats s;
  std::vector<double> pooled;
  double answer_sum = 0.0, other_sum = 0.0;
  std::size_t answers = 0, others = 0;
  for (std::size_t b = 0; b < batch.groups.size(); ++b) {
    for (std::size_t g = 0; g < batch.groups[b].size(); ++g) {
      const auto& traj = batch.groups[b][g];
      const auto& c = batch.credit[b][g].connectivity;
      for (std::size_t t = 0; t < traj.length(); ++t) {
        pooled.push_back(c[t]);
        if (shape.is_symbol(traj.tokens[t])) {
          answer_sum += c[t];
          ++answers;
        } else {
          other_sum += c[t];
          ++others;
        }
      }
    }
  }
  if (pooled.empty()) return s;
  const Histogram h = make_histogram(pooled, 1, 0.15);
  s.tokens = pooled.size();
  s.threshold = h.threshold;
  s.above = h.above;
  s.answer_mean_c = answers == 0 ? 0.0 : answer_sum / static_cast<double>(answers);
  s.other_mean_c = others == 0 ? 0.0 : other_sum / static_cast<double>(others);
  return s;
}

class Ascent {
 public:
  Ascent(const TrainConfig& config, std::size_t n) : config_(config), m_(n, 0.0), v_(n, 0.0) {}

  void apply(std::span<double> params, const std::vector<double>& grad) {
    if (config_.optimizer == Optimizer::kSgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] += config_.lr * grad[i];
      return;
    }
    ++t_;
    const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
      params[i] += config_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.adam_eps);
    }
  }

 private:
  const TrainConfig& config_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace

std::string_view to_string(Optimizer opt) noexcept { return opt == Optimizer::kSgd ? "sgd" : "adam"; }

std::optional<Optimizer> parse_optimizer(std::string_view text) noexcept {
  if (text == "sgd") return Optimizer::kSgd;
  if (text == "adam") return Optimizer::kAdam;
  return std::nullopt;
}

void TrainConfig::validate() const {
  shape.validate();
  pipeline.validate();
  if (pipeline.group_size < 2) throw Error(ErrorCode::kGroupTooSmall, "group size must be at least 2");
  if (prompts_per_step == 0) throw Error(ErrorCode::kInvalidParameter, "prompts per step must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw Error(ErrorCode::kInvalidParameter, "learning rate must be > 0");
  if (window == 0) throw Error(ErrorCode::kInvalidParameter, "reward window must be positive");
  if (seeds.empty()) throw Error(ErrorCode::kInvalidParameter, "at least one seed is required");
}

double TrainConfig::effective_beta() const noexcept {
  return pipeline.engine == Engine::kGrpo ? pipeline.surrogate.beta : 0.0;
}

ToyTimings& ToyTimings::operator+=(const ToyTimings& o) noexcept {
  rollout += o.rollout;
  credit += o.credit;
  objective += o.objective;
  update += o.update;
  total += o.total;
  return *this;
}

const std::vector<std::string>& train_keys() {
  static const std::vector<std::string> keys = {
      "steps", "lr",      "prompts",       "optimizer", "slots",        "alphabet",  "fillers",
      "prompt-len", "max-len", "reasoning-len", "dim",       "heads",        "grammar",   "ordinal-init",
      "residual-out", "output-bias", "pointer", "pointer-floor", "symbol-head", "head-init",
      "threshold",  "window"};
  return keys;
}

namespace {

std::uint64_t to_count(std::string_view key, std::string_view value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw Error(ErrorCode::kInvalidParameter, "cannot parse '" + std::string(value) + "' for " + std::string(key));
  }
  return v;
}

double to_real(std::string_view key, std::string_view value) {
  try {
    std::size_t used = 0;
    const std::string text(value);
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kInvalidParameter, "cannot parse '" + std::string(value) + "' for " + std::string(key));
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw Error(ErrorCode::kInvalidParameter, "expected true or false for " + std::string(key));
}

}  // namespace

void apply_train_setting(TrainConfig& c, std::string_view key, std::string_view value) {
  auto& s = c.shape;
  if (key == "steps") c.steps = to_count(key, value);
  else if (key == "lr") c.lr = to_real(key, value);
  else if (key == "prompts") c.prompts_per_step = to_count(key, value);
  else if (key == "optimizer") {
    const auto o = parse_optimizer(value);
    if (!o) throw Error(ErrorCode::kInvalidParameter, "optimizer must be sgd or adam");
    c.optimizer = *o;
  } else if (key == "slots") s.slots = to_count(key, value);
  else if (key == "alphabet") s.alphabet = to_count(key, value);
  else if (key == "fillers") s.fillers = to_count(key, value);
  else if (key == "prompt-len") s.prompt_len = to_count(key, value);
  else if (key == "max-len") s.max_len = to_count(key, value);
  else if (key == "reasoning-len") s.reasoning_len = to_count(key, value);
  else if (key == "dim") s.dim = to_count(key, value);
  else if (key == "heads") s.heads = to_count(key, value);
  else if (key == "grammar") {
    const auto g = parse_grammar(value);
    if (!g) throw Error(ErrorCode::kInvalidParameter, "grammar must be template, open or free");
    s.grammar = *g;
  } else if (key == "ordinal-init") s.ordinal_init = to_real(key, value);
  else if (key == "residual-out") s.residual_out = to_bool(key, value);
  else if (key == "output-bias") s.output_bias = to_bool(key, value);
  else if (key == "pointer") s.pointer = to_bool(key, value);
  else if (key == "pointer-floor") s.pointer_floor = to_real(key, value);
  else if (key == "symbol-head") s.symbol_head = to_bool(key, value);
  else if (key == "head-init") s.head_init = to_real(key, value);
  else if (key == "threshold") c.reward_threshold = to_real(key, value);
  else if (key == "window") c.window = to_count(key, value);
  else apply_setting(c.pipeline, key, value);
}

std::string get_train_setting(const TrainConfig& c, std::string_view key) {
  const auto& s = c.shape;
  if (key == "steps") return std::to_string(c.steps);
  if (key == "lr") return format_g9(c.lr);
  if (key == "prompts") return std::to_string(c.prompts_per_step);
  if (key == "optimizer") return std::string(to_string(c.optimizer));
  if (key == "slots") return std::to_string(s.slots);
  if (key == "alphabet") return std::to_string(s.alphabet);
  if (key == "fillers") return std::to_string(s.fillers);
  if (key == "prompt-len") return std::to_string(s.prompt_len);
  if (key == "max-len") return std::to_string(s.max_len);
  if (key == "reasoning-len") return std::to_string(s.reasoning_len);
  if (key == "dim") return std::to_string(s.dim);
  if (key == "heads") return std::to_string(s.heads);
  if (key == "grammar") return std::string(to_string(s.grammar));
  if (key == "ordinal-init") return format_g9(s.ordinal_init);
  if (key == "residual-out") return s.residual_out ? "true" : "false";
  if (key == "output-bias") return s.output_bias ? "true" : "false";
  if (key == "pointer") return s.pointer ? "true" : "false";
  if (key == "pointer-floor") return format_g9(s.pointer_floor);
  if (key == "symbol-head") return s.symbol_head ? "true" : "false";
  if (key == "head-init") return format_g9(s.head_init);
  if (key == "threshold") return format_g9(c.reward_threshold);
  if (key == "window") return std::to_string(c.window);
  return get_setting(c.pipeline, key);
}

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> seeds;
  const auto dots = text.find("..");
  if (dots != std::string_view::npos) {
    const auto lo = to_count("seeds", text.substr(0, dots));
    const auto hi = to_count("seeds", text.substr(dots + 2));
    if (hi < lo) throw Error(ErrorCode::kInvalidParameter, "seed range must be ascending");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto part = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    seeds.push_back(to_count("seeds", part));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return seeds;
}

double VariantReport::mean_final_reward() const noexcept {
  if (runs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : runs) s += r.final_reward;
  return s / static_cast<double>(runs.size());
}

double trailing_mean(const std::vector<double>& curve, std::size_t end, std::size_t window) {
  end = std::min(end, curve.size());
  const std::size_t begin = end > window ? end - window : 0;
  if (begin == end) return 0.0;
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += curve[i];
  return s / static_cast<double>(end - begin);
}

std::uint64_t param_digest(std::span<const double> params) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double p : params) {
    std::uint64_t bits;
    std::memcpy(&bits, &p, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

SeedRun train_seed(const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  ToyPolicy policy(config.shape, derive_seed(seed, kInitStream));
  const ToyPolicy reference = policy;
  const double beta = config.effective_beta();
  Ascent ascent(config, policy.param_count());
  SeedRun run;
  run.seed = seed;
  std::vector<double> grad(policy.param_count());
  for (std::size_t step = 0; step < config.steps; ++step) {
    ToyTimings t;
    const auto step_start = Clock::now();
    Batch batch = collect(policy, config, seed, step, t);

    auto start = Clock::now();
    if (beta > 0.0) fill_reference(reference, batch);
    std::fill(grad.begin(), grad.end(), 0.0);
    accumulate_gradient(policy, batch, config, beta, grad);
    t.objective = seconds_since(start);

    start = Clock::now();
    ascent.apply(policy.params(), grad);
    t.update = seconds_since(start);
    t.total = seconds_since(step_start);
    run.timings += t;

    run.reward.push_back(batch.mean_reward);
    run.digest.push_back(param_digest(policy.params()));
    if (!run.steps_to_threshold && run.reward.size() >= config.window &&
        trailing_mean(run.reward, run.reward.size(), config.window) >= config.reward_threshold) {
      run.steps_to_threshold = run.reward.size();
    }
    if (step + 1 == config.steps) run.anchors = anchor_stats(batch, config.shape);
  }
  run.final_reward = trailing_mean(run.reward, run.reward.size(), config.window);
  run.final_params.assign(policy.params().begin(), policy.params().end());
  return run;
}

VariantReport train(const TrainConfig& config, std::string label) {
  config.validate();
  VariantReport report;
  report.mode = config.pipeline.mode;
  report.engine = config.pipeline.engine;
  report.hard_p = config.pipeline.hard_p;
  report.beta = config.effective_beta();
  report.steps = config.steps;
  report.label = label.empty() ? std::string(atrl::to_string(config.pipeline.mode)) : std::move(label);
  for (std::uint64_t seed : config.seeds) report.runs.push_back(train_seed(config, seed));
  return report;
}

double mean_reward(const ToyPolicy& policy, std::size_t scenes, std::uint64_t seed) {
  double total = 0.0;
  for (std::size_t i = 0; i < scenes; ++i) {
    const auto scene = gen_scene(derive_seed(seed, kSceneStream, i), policy.shape().slots, policy.shape().alphabet);
    total += verify(policy.rollout(scene, derive_seed(seed, kRolloutStream, i)).answer, scene);
  }
  return scenes == 0 ? 0.0 : total / static_cast<double>(scenes);
}

GradCheckResult grad_check(const TrainConfig& config, std::uint64_t seed, std::size_t coords, double h) {
  config.validate();
  ToyPolicy policy(config.shape, derive_seed(seed, kInitStream));
  const ToyPolicy reference = policy;
  std::mt19937_64 rng(derive_seed(seed, 5));
  // Move the output head and pointer gain off zero; at zero nothing upstream receives gradient.
  auto p = policy.params();
  const std::size_t head = policy.param_count() - policy.shape().out_vocab() * (policy.shape().dim + 1) - 1;
  for (std::size_t i = head; i < p.size(); ++i) p[i] = 0.5 * (2.0 * uniform01(rng) - 1.0);

  const double beta = config.effective_beta();
  ToyTimings ignored;
  Batch batch = collect(policy, config, seed, 0, ignored);
  if (beta > 0.0) fill_reference(reference, batch);
  std::vector<double> grad(policy.param_count(), 0.0);
  accumulate_gradient(policy, batch, config, beta, grad);

  GradCheckResult result;
  result.objective = objective_value(policy, batch, config, beta);
  result.coords = coords;
  ToyPolicy probe = policy;
  for (std::size_t c = 0; c < coords; ++c) {
    const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(policy.param_count()));
    const double keep = probe.params()[i];
    probe.params()[i] = keep + h;
    const double up = objective_value(probe, batch, config, beta);
    probe.params()[i] = keep - h;
    const double down = objective_value(probe, batch, config, beta);
    probe.params()[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(numeric - grad[i]);
    const double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-8});
    result.max_abs_error = std::max(result.max_abs_error, err);
    result.max_rel_error = std::max(result.max_rel_error, err / denom);
  }
  return result;
}

}  // namespace atrl::toy
