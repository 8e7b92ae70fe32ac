// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace atrl::toy {

inline constexpr std::size_t kDefaultSlots = 8;
inline constexpr std::size_t kDefaultAlphabet = 10;

/// V visual slots holding symbols from an alphabet of size M. The answer is
/// the symbol in the slot holding the largest id (lowest slot on ties).
struct SyntheticScene {
  std::vector<std::uint32_t> slot_symbols;
  std::uint32_t truth = 0;
  std::uint64_t distractor_seed = 0;
};

std::uint32_t truth_of(const std::vector<std::uint32_t>& slot_symbols);

/// Symbols i.i.d. uniform over [0, alphabet); deterministic per seed.
SyntheticScene gen_scene(std::uint64_t seed, std::size_t slots = kDefaultSlots,
                         std::size_t alphabet = kDefaultAlphabet);

/// +1 for an exact match, -1 otherwise; no answer counts as wrong.
double verify(std::optional<std::uint32_t> answer, const SyntheticScene& scene) noexcept;

/// splitmix64 finaliser, used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) noexcept;

/// Uniform double in [0, 1) from the top 53 bits of one draw.
template <class Rng>
double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace atrl::toy
