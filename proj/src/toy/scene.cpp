// SPDX-License-Identifier: Apache-2.0

#include "atrl/toy/scene.hpp"

#include <random>

#include "atrl/error.hpp"

namespace atrl::toy {

std::uint32_t truth_of(const std::vector<std::uint32_t>& slot_symbols) {
  if (slot_symbols.empty()) throw Error(ErrorCode::kInvalidParameter, "scene without slots");
  std::size_t best = 0;
  for (std::size_t j = 1; j < slot_symbols.size(); ++j) {
    if (slot_symbols[j] > slot_symbols[best]) best = j;
  }
  return slot_symbols[best];
}

SyntheticScene gen_scene(std::uint64_t seed, std::size_t slots, std::size_t alphabet) {
  if (slots == 0 || alphabet == 0) throw Error(ErrorCode::kInvalidParameter, "scene needs slots and symbols");
  std::mt19937_64 rng(seed);
  SyntheticScene scene;
  scene.slot_symbols.resize(slots);
  for (auto& s : scene.slot_symbols) {
    s = static_cast<std::uint32_t>(uniform01(rng) * static_cast<double>(alphabet));
  }
  scene.truth = truth_of(scene.slot_symbols);
  scene.distractor_seed = rng();
  return scene;
}

double verify(std::optional<std::uint32_t> answer, const SyntheticScene& scene) noexcept {
  return answer && *answer == scene.truth ? 1.0 : -1.0;
}

std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept {
  return mix_seed(mix_seed(mix_seed(mix_seed(base) ^ a) ^ b) ^ c);
}

}  // namespace atrl::toy
