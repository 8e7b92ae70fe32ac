// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace atrl {

/// Largest accepted value for any single ATN1 dimension.
inline constexpr std::uint32_t kMaxDim = 1u << 20;

/// Row-stochastic rows must sum to one within this tolerance.
inline constexpr double kRowSumTolerance = 1e-4;

/// Stack of per-layer, per-head attention matrices over a generated sequence.
///
/// Values are laid out row-major in (layer, head, gen position, ctx position)
/// order. Layer `layers - 1` is the final decoder layer.
struct AttentionTensor {
  std::uint32_t layers = 0;
  std::uint32_t heads = 0;
  std::uint32_t gen_len = 0;
  std::uint32_t ctx_len = 0;
  bool row_stochastic = false;
  std::vector<float> values;

  static AttentionTensor zeros(std::uint32_t layers, std::uint32_t heads, std::uint32_t gen_len,
                               std::uint32_t ctx_len, bool row_stochastic = false);

  std::size_t size() const noexcept {
    return std::size_t{layers} * heads * gen_len * ctx_len;
  }
  std::size_t offset(std::size_t l, std::size_t h, std::size_t i, std::size_t j) const noexcept {
    return ((l * heads + h) * gen_len + i) * ctx_len + j;
  }
  float at(std::size_t l, std::size_t h, std::size_t i, std::size_t j) const noexcept {
    return values[offset(l, h, i, j)];
  }
  float& at(std::size_t l, std::size_t h, std::size_t i, std::size_t j) noexcept {
    return values[offset(l, h, i, j)];
  }
  std::span<const float> row(std::size_t l, std::size_t h, std::size_t i) const noexcept {
    return {values.data() + offset(l, h, i, 0), ctx_len};
  }

  /// Throws atrl::Error when dims, values or the row-stochastic claim are invalid.
  void validate() const;
};

AttentionTensor load_attention(const std::filesystem::path& path);
void save_attention(const AttentionTensor& tensor, const std::filesystem::path& path);

/// In-memory ATN1 codec; the file functions are thin wrappers over these.
std::vector<std::uint8_t> encode_attention(const AttentionTensor& tensor);
AttentionTensor decode_attention(std::span<const std::uint8_t> bytes);

enum class Modality : std::uint8_t { kVision, kLanguage };

struct TokenMeta {
  std::vector<Modality> ctx_modality;
  std::optional<std::vector<std::string>> gen_text;

  /// Context positions labelled vision, ascending.
  std::vector<std::size_t> visual_indices() const;
};

/// Parses the JSON token-metadata file. When `expected_ctx_len` is given the
/// modality string must match it; when `expected_gen_len` is given so must gen_text.
TokenMeta load_token_meta(const std::filesystem::path& path,
                          std::optional<std::size_t> expected_ctx_len = std::nullopt,
                          std::optional<std::size_t> expected_gen_len = std::nullopt);
TokenMeta parse_token_meta(const std::string& text);
std::string dump_token_meta(const TokenMeta& meta);
void save_token_meta(const TokenMeta& meta, const std::filesystem::path& path);

}  // namespace atrl
