// SPDX-License-Identifier: Apache-2.0
//
// Writes the shipped connectivity fixture, or a topic-structured random
// attention file for benchmarking.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "atrl/error.hpp"
#include "atrl/fixture.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate synthetic attention fixtures"};
  std::string out_dir = "fixtures";
  std::uint64_t seed = 0;
  std::uint32_t layers = 0, heads = 8, gen = 512, ctx = 1024, visual = 576;
  std::size_t topics = 24;
  app.add_option("--out-dir", out_dir, "Output directory");
  app.add_option("--seed", seed, "Generator seed");
  auto* random = app.add_option("--random-layers", layers, "Write a random topic tensor with this many layers instead");
  app.add_option("--heads", heads)->needs(random);
  app.add_option("--gen-len", gen)->needs(random);
  app.add_option("--ctx-len", ctx)->needs(random);
  app.add_option("--visual", visual, "Visual context columns")->needs(random);
  app.add_option("--topics", topics)->needs(random);
  CLI11_PARSE(app, argc, argv);

  try {
    if (layers > 0) {
      const auto tensor = atrl::make_topic_attention(layers, heads, gen, ctx, topics, seed);
      const std::string base = out_dir + "/topics_L" + std::to_string(layers) + "_H" + std::to_string(heads) + "_T" +
                               std::to_string(gen) + "_S" + std::to_string(ctx);
      atrl::save_attention(tensor, base + ".atn");
      atrl::save_token_meta(atrl::make_meta(ctx, visual), base + ".meta.json");
      std::printf("%s.atn\n", base.c_str());
      return 0;
    }
    const auto fx = atrl::make_anchor_fixture(seed);
    atrl::save_attention(fx.tensor, out_dir + "/anchor540.atn");
    atrl::save_token_meta(fx.meta, out_dir + "/anchor540.meta.json");
    std::printf("%s/anchor540.atn\n", out_dir.c_str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "atrl_fixture: %s\n", e.what());
    return 1;
  }
  return 0;
}
