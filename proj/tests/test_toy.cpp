// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include "atrl/error.hpp"
#include "atrl/toy/policy.hpp"
#include "atrl/toy/scene.hpp"
#include "atrl/toy/train_report.hpp"
#include "atrl/toy/trainer.hpp"
#include "doctest.h"

using namespace atrl;
using namespace atrl::toy;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.steps = 6;
  c.prompts_per_step = 4;
  c.seeds = {0, 1};
  return c;
}

}  // namespace

TEST_CASE("scene answer is the largest symbol") {
  CHECK(truth_of({3, 7, 7, 1}) == 7);
  CHECK(truth_of({0}) == 0);
  CHECK_THROWS_AS(truth_of({}), Error);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = gen_scene(seed);
    REQUIRE(s.slot_symbols.size() == kDefaultSlots);
    for (auto v : s.slot_symbols) CHECK(v < kDefaultAlphabet);
    CHECK(s.truth == *std::max_element(s.slot_symbols.begin(), s.slot_symbols.end()));
  }
}

TEST_CASE("scenes are deterministic per seed") {
  const auto a = gen_scene(99);
  const auto b = gen_scene(99);
  CHECK(a.slot_symbols == b.slot_symbols);
  CHECK(a.distractor_seed == b.distractor_seed);
  CHECK(gen_scene(100).slot_symbols != a.slot_symbols);
  const auto one = gen_scene(5, 1, 4);
  CHECK(one.truth == one.slot_symbols[0]);
}

TEST_CASE("verify rewards exact matches only") {
  const auto s = gen_scene(3);
  CHECK(verify(s.truth, s) == 1.0);
  CHECK(verify((s.truth + 1) % kDefaultAlphabet, s) == -1.0);
  CHECK(verify(std::nullopt, s) == -1.0);
}

TEST_CASE("derived seeds separate streams") {
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2, 0) != derive_seed(2, 2, 0));
  CHECK(derive_seed(7, 1, 2, 3) == derive_seed(7, 1, 2, 3));
}

TEST_CASE("grammar names round trip") {
  for (auto g : {Grammar::kTemplate, Grammar::kOpen, Grammar::kFree}) CHECK(parse_grammar(to_string(g)) == g);
  CHECK_FALSE(parse_grammar("loose").has_value());
}

TEST_CASE("rollouts are reproducible and follow the template") {
  const PolicyShape shape;
  const ToyPolicy policy(shape, 11);
  const auto scene = gen_scene(4);
  const auto a = policy.rollout(scene, 21);
  const auto b = policy.rollout(scene, 21);
  CHECK(a.tokens == b.tokens);
  CHECK(a.logp == b.logp);
  REQUIRE(a.length() == shape.reasoning_len + 2);
  for (std::size_t t = 0; t < shape.reasoning_len; ++t) CHECK_FALSE(shape.is_symbol(a.tokens[t]));
  CHECK(shape.is_symbol(a.tokens[shape.reasoning_len]));
  CHECK(a.tokens.back() == shape.end_token());
  CHECK(a.answer == a.tokens[shape.reasoning_len]);
  for (double lp : a.logp) CHECK(lp <= 0.0);
}

TEST_CASE("teacher forcing reproduces the sampled log-probabilities") {
  const ToyPolicy policy(PolicyShape{}, 2);
  const auto scene = gen_scene(8);
  const auto sampled = policy.rollout(scene, 5);
  const auto forced = policy.evaluate(scene, sampled.tokens);
  REQUIRE(forced.logp.size() == sampled.logp.size());
  for (std::size_t t = 0; t < forced.logp.size(); ++t) CHECK(forced.logp[t] == doctest::Approx(sampled.logp[t]));
  CHECK(forced.answer == sampled.answer);
}

TEST_CASE("recorded attention rows are causal distributions") {
  const PolicyShape shape;
  const ToyPolicy policy(shape, 3);
  const auto traj = policy.rollout(gen_scene(1), 9);
  const auto tensor = policy.attention_tensor(traj);
  CHECK(tensor.layers == 1);
  CHECK(tensor.gen_len == traj.length());
  CHECK(tensor.ctx_len == shape.ctx_len());
  for (std::size_t h = 0; h < tensor.heads; ++h) {
    for (std::size_t t = 0; t < tensor.gen_len; ++t) {
      double sum = 0.0;
      for (std::size_t s = 0; s < tensor.ctx_len; ++s) sum += tensor.at(0, h, t, s);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
  CHECK(policy.visual_columns().size() == shape.slots);
}

TEST_CASE("an untrained policy guesses at chance") {
  const PolicyShape shape;
  const ToyPolicy policy(shape, 17);
  const std::size_t n = 1000;
  const double m = static_cast<double>(shape.alphabet);
  const double mean = 2.0 / m - 1.0;
  const double sd = 2.0 * std::sqrt((1.0 / m) * (1.0 - 1.0 / m) / static_cast<double>(n));
  CHECK(std::abs(mean_reward(policy, n, 23) - mean) < 3.0 * sd);
}

TEST_CASE("categorical KL is zero for equal inputs and positive otherwise") {
  const std::vector<double> p{std::log(0.5), std::log(0.25), std::log(0.25)};
  const std::vector<double> q{std::log(0.25), std::log(0.5), std::log(0.25)};
  CHECK(categorical_kl(p, p) == 0.0);
  CHECK(categorical_kl(p, q) == doctest::Approx(0.25 * std::log(2.0)));
}

TEST_CASE("analytic gradient matches finite differences") {
  for (auto engine : {"grpo", "reinforce"}) {
    TrainConfig c = small_config();
    apply_train_setting(c, "engine", engine);
    for (std::uint64_t seed : {0u, 1u}) {
      const auto r = grad_check(c, seed, 30);
      CHECK(r.coords == 30);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("gradient check covers the open grammar") {
  TrainConfig c = small_config();
  apply_train_setting(c, "grammar", "open");
  apply_train_setting(c, "symbol-head", "true");
  CHECK(grad_check(c, 4, 30).max_rel_error < 1e-4);
}

TEST_CASE("training is deterministic per seed") {
  const TrainConfig c = small_config();
  const auto a = train_seed(c, 1);
  const auto b = train_seed(c, 1);
  CHECK(a.digest == b.digest);
  CHECK(a.reward == b.reward);
  CHECK(a.final_params == b.final_params);
  CHECK(a.digest.size() == c.steps);
}

TEST_CASE("one cluster makes at-rl training identical to uniform") {
  TrainConfig atrl = small_config();
  apply_train_setting(atrl, "k", "1");
  TrainConfig uniform = atrl;
  apply_train_setting(uniform, "mode", "uniform");
  CHECK(train_seed(atrl, 2).digest == train_seed(uniform, 2).digest);
}

TEST_CASE("training records timings and anchor statistics") {
  const auto r = train_seed(small_config(), 0);
  CHECK(r.timings.total > 0.0);
  CHECK(r.timings.rollout > 0.0);
  CHECK(r.timings.credit.total() > 0.0);
  CHECK(r.anchors.tokens > 0);
  CHECK(r.anchors.above <= r.anchors.tokens);
  CHECK(r.reward.size() == 6);
}

TEST_CASE("train settings read back what was applied") {
  TrainConfig c;
  for (const auto& key : train_keys()) {
    const auto before = get_train_setting(c, key);
    apply_train_setting(c, key, before);
    CHECK(get_train_setting(c, key) == before);
  }
  apply_train_setting(c, "symbol-head", "false");
  CHECK_FALSE(c.shape.symbol_head);
  CHECK_THROWS_AS(apply_train_setting(c, "pointer", "maybe"), Error);
  CHECK_THROWS_AS(apply_train_setting(c, "steps", "-1"), Error);
  CHECK(parse_seed_list("0..3") == std::vector<std::uint64_t>{0, 1, 2, 3});
  CHECK(parse_seed_list("4,1") == std::vector<std::uint64_t>{4, 1});
}

TEST_CASE("invalid toy configurations are rejected") {
  TrainConfig c;
  c.shape.heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.shape.max_len = c.shape.reasoning_len;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.lr = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("train report JSON round trip is exact") {
  TrainConfig c = small_config();
  c.steps = 3;
  TrainReport rep;
  rep.config = describe(c);
  rep.variants.push_back(train(c, "uniform"));
  const auto text = dump_train_report(rep);
  const auto back = parse_train_report(text);
  CHECK(same_serialised(rep, back));
  CHECK(dump_train_report(back) == text);
  CHECK_THROWS_AS(parse_train_report("{\"format\": \"other\"}"), Error);
}
