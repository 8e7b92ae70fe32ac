// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "atrl/tensor_io.hpp"
#include "atrl/toy/scene.hpp"

namespace atrl::toy {

/// How the decoder may emit tokens.
///   kTemplate: `reasoning_len` filler steps, one symbol step (the answer), END.
///   kOpen:     as kTemplate, but reasoning steps may also emit symbols; the
///              answer is the symbol at step `reasoning_len`.
///   kFree:     fillers or symbols at every step; the first symbol is the
///              answer and END follows it. Without a symbol by max_len - 1
///              steps END is forced and no answer is given.
enum class Grammar { kTemplate, kOpen, kFree };

std::string_view to_string(Grammar grammar) noexcept;
std::optional<Grammar> parse_grammar(std::string_view text) noexcept;

struct PolicyShape {
  std::size_t slots = kDefaultSlots;        // V
  std::size_t alphabet = kDefaultAlphabet;  // M
  std::size_t fillers = 6;                  // F
  std::size_t prompt_len = 1;
  std::size_t max_len = 8;
  std::size_t reasoning_len = 5;  // template grammar only
  std::size_t dim = 16;
  std::size_t heads = 2;
  double ordinal_init = 0.0;  // weight of a shared symbol-rank direction in the initial slot embeddings
  bool residual_out = true;   // output head reads x + attention (true) or attention only
  bool output_bias = true;
  bool pointer = true;        // symbol logits add gain * log(floor + attention mass on slots showing that symbol)
  double pointer_floor = 1e-3;
  bool symbol_head = false;   // true: symbols also get output-head logits, not only the pointer
  double head_init = 1.0;     // output head entries start at N(0, (head_init / sqrt(dim))^2)
  Grammar grammar = Grammar::kTemplate;

  void validate() const;
  std::size_t head_dim() const noexcept { return dim / heads; }
  std::size_t out_vocab() const noexcept { return alphabet + fillers + 1; }
  std::size_t in_vocab() const noexcept { return alphabet + fillers + 2; }
  std::uint32_t end_token() const noexcept { return static_cast<std::uint32_t>(alphabet + fillers); }
  std::uint32_t bos_token() const noexcept { return static_cast<std::uint32_t>(alphabet + fillers + 1); }
  bool is_symbol(std::uint32_t token) const noexcept { return token < alphabet; }
  /// Columns of a recorded attention row: slots, prompt, then max_len text positions.
  std::size_t ctx_len() const noexcept { return slots + prompt_len + max_len; }
};

/// Half-open range of output tokens allowed at one step.
struct TokenRange {
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;
  std::size_t size() const noexcept { return hi - lo; }
};

/// Activations of one decoded sequence, kept for the backward pass.
struct ForwardCache {
  std::vector<std::uint32_t> slot_symbols;
  std::vector<double> y;        // context inputs, rows = slots + prompt + steps, dim cols
  std::vector<double> k, v;     // same layout as y
  std::vector<double> q;        // steps x dim
  std::vector<double> attn;     // steps x heads x ctx_len (zeros past the causal frontier)
  std::vector<double> mix;      // steps x dim, concatenated head outputs
  std::vector<double> z;        // steps x dim
  std::vector<double> logp;     // steps x out_vocab, log-probabilities over the allowed range
  std::vector<TokenRange> allowed;
  std::vector<std::uint32_t> inputs;  // previous token fed at each step (BOS first)
};

struct Trajectory {
  std::vector<std::uint32_t> tokens;
  std::vector<double> logp;  // log pi(token_t | prefix)
  std::optional<std::uint32_t> answer;
  ForwardCache cache;

  std::size_t length() const noexcept { return tokens.size(); }
};

/// Single-block causal attention decoder over [visual slots, prompt, text].
/// Parameters live in one flat vector so optimisers and finite differences
/// can treat them uniformly.
class ToyPolicy {
 public:
  ToyPolicy(const PolicyShape& shape, std::uint64_t seed);

  const PolicyShape& shape() const noexcept { return shape_; }
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }
  std::size_t param_count() const noexcept { return params_.size(); }

  /// Samples at temperature 1 from `rng_seed`, or decodes greedily.
  Trajectory rollout(const SyntheticScene& scene, std::uint64_t rng_seed, bool greedy = false) const;
  std::vector<Trajectory> rollout_group(const SyntheticScene& scene, std::size_t group,
                                        std::uint64_t seed, bool greedy = false) const;

  /// Teacher-forced pass over a fixed token sequence.
  Trajectory evaluate(const SyntheticScene& scene, std::span<const std::uint32_t> tokens) const;

  /// Recorded attention as an L=1 tensor, T rows by ctx_len() columns.
  AttentionTensor attention_tensor(const Trajectory& traj) const;
  std::vector<std::size_t> visual_columns() const;

  /// Accumulates d(objective)/d(params) into `grad`, given d(objective)/d(logit)
  /// for every step; dlogits[t] covers cache.allowed[t].
  void backward(const ForwardCache& cache, std::span<const std::vector<double>> dlogits,
                std::span<double> grad) const;

 private:
  struct Layout {
    std::size_t e_vis, p_slot, e_prompt, e_tok, p_pos, w_q, w_k, w_v, w_o, u, c, gain, total;
  };

  bool answers(std::size_t step, std::uint32_t token) const;
  bool uses_head(std::uint32_t token) const;
  TokenRange allowed_at(std::size_t step, std::span<const std::uint32_t> prefix) const;
  void push_context(ForwardCache& cache, const double* row) const;
  void step(ForwardCache& cache, std::size_t t, std::uint32_t input) const;
  // Head-averaged attention on the slots that show each symbol of `range`.
  std::vector<double> symbol_mass(const ForwardCache& cache, std::size_t attn_at, TokenRange range) const;

  PolicyShape shape_;
  Layout at_{};
  std::vector<double> params_;
};

/// Exact KL(p || q) between two allowed-range distributions given as log-probs.
double categorical_kl(std::span<const double> logp, std::span<const double> logq);

}  // namespace atrl::toy
