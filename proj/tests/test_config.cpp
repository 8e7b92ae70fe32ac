// SPDX-License-Identifier: Apache-2.0
#include "atrl/config.hpp"
#include "atrl/error.hpp"
#include "doctest.h"

using namespace atrl;

TEST_CASE("key=value text ignores comments and blank lines") {
  const auto kv = parse_key_values("# header\n tau-sim = 0.8  # inline\n\nmode=hard\n");
  REQUIRE(kv.size() == 2);
  CHECK(kv.at("tau-sim") == "0.8");
  CHECK(kv.at("mode") == "hard");
  CHECK_THROWS_AS(parse_key_values("tau-sim 0.8\n"), Error);
  CHECK_THROWS_AS(parse_key_values("= 3\n"), Error);
}

TEST_CASE("every key reads back what was applied") {
  PipelineConfig c;
  for (const auto& key : pipeline_keys()) {
    const auto before = get_setting(c, key);
    apply_setting(c, key, before);
    CHECK(get_setting(c, key) == before);
  }
}

TEST_CASE("settings change the intended fields") {
  PipelineConfig c;
  apply_settings(c, parse_key_values("k=7\ntop-layers=2\nbias-axis=ctx\ncentral-by=phi\nengine=reinforce\nbeta=0\n"));
  CHECK(c.k == 7u);
  CHECK(c.resolve_k(500) == 7);
  CHECK(c.resolve_top_layers(32) == 2);
  CHECK(c.bias_axis == BiasAxis::kContext);
  CHECK(c.refine.central_by == CentralBy::kPhi);
  CHECK(c.engine == Engine::kReinforce);
  CHECK(c.surrogate.beta == 0.0);
  apply_setting(c, "k", "auto");
  CHECK(c.resolve_k(500) == 50);
}

TEST_CASE("top layers default to at most four") {
  const PipelineConfig c;
  CHECK(c.resolve_top_layers(32) == 4);
  CHECK(c.resolve_top_layers(1) == 1);
}

TEST_CASE("bad keys and values are input errors") {
  PipelineConfig c;
  for (auto [k, v] : {std::pair{"nope", "1"}, {"tau-sim", "abc"}, {"mode", "soft"}, {"k", "-2"},
                      {"bias-axis", "rows"}, {"engine", "ppo"}, {"alpha", "1e999"}}) {
    try {
      apply_setting(c, k, v);
      FAIL("accepted " << k << "=" << v);
    } catch (const Error& e) {
      CHECK(is_input_error(e.code()));
    }
  }
}

TEST_CASE("config validation") {
  PipelineConfig c;
  CHECK_NOTHROW(c.validate());
  c.group_size = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = PipelineConfig{};
  c.tau_sim = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = PipelineConfig{};
  c.hard_p = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
}
