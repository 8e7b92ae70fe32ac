// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>

#include "atrl/error.hpp"
#include "atrl/tensor_io.hpp"
#include "doctest.h"

using namespace atrl;

namespace {

AttentionTensor small_tensor(bool stochastic) {
  auto t = AttentionTensor::zeros(2, 3, 4, 5, stochastic);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> unit(0.01f, 1.0f);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t i = 0; i < 4; ++i) {
        float sum = 0.0f;
        for (std::size_t j = 0; j < 5; ++j) sum += (t.at(l, h, i, j) = unit(rng));
        if (stochastic)
          for (std::size_t j = 0; j < 5; ++j) t.at(l, h, i, j) /= sum;
      }
  return t;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) b[at + k] = static_cast<std::uint8_t>(v >> (8 * k));
}

ErrorCode decode_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_attention(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("decode accepted malformed input");
  return ErrorCode::kInvariantViolation;
}

}  // namespace

TEST_CASE("atn1 header layout is little-endian with a flags byte") {
  const auto t = small_tensor(true);
  const auto bytes = encode_attention(t);
  REQUIRE(bytes.size() == 4 + 16 + 1 + 4 * t.size());
  CHECK(std::memcmp(bytes.data(), "ATN1", 4) == 0);
  CHECK(bytes[4] == 2);
  CHECK(bytes[8] == 3);
  CHECK(bytes[12] == 4);
  CHECK(bytes[16] == 5);
  CHECK(bytes[20] == 1);
  float first = 0.0f;
  std::memcpy(&first, bytes.data() + 21, 4);
  CHECK(first == t.values[0]);
}

TEST_CASE("atn1 round trip in memory and on disk") {
  for (bool stochastic : {false, true}) {
    const auto t = small_tensor(stochastic);
    const auto back = decode_attention(encode_attention(t));
    CHECK(back.layers == t.layers);
    CHECK(back.row_stochastic == stochastic);
    CHECK(back.values == t.values);

    const auto path = std::filesystem::temp_directory_path() / "atrl_io_test.atn";
    save_attention(t, path);
    CHECK(load_attention(path).values == t.values);
    std::filesystem::remove(path);
  }
}

TEST_CASE("atn1 rejects malformed input with specific errors") {
  const auto good = encode_attention(small_tensor(false));

  auto bad_magic = good;
  bad_magic[3] = '2';
  CHECK(decode_error(bad_magic) == ErrorCode::kBadMagic);

  auto overflow = good;
  put_u32(overflow, 12, kMaxDim + 1);
  CHECK(decode_error(overflow) == ErrorCode::kDimOverflow);

  auto truncated = good;
  truncated.pop_back();
  CHECK(decode_error(truncated) == ErrorCode::kTruncatedPayload);
  CHECK(decode_error(std::vector<std::uint8_t>(good.begin(), good.begin() + 10)) ==
        ErrorCode::kTruncatedPayload);

  auto nan = good;
  const float q = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan.data() + 21 + 8, &q, 4);
  CHECK(decode_error(nan) == ErrorCode::kNonFiniteValue);

  auto zero_dim = good;
  put_u32(zero_dim, 4, 0);
  CHECK_THROWS_AS(decode_attention(zero_dim), Error);
}

TEST_CASE("row-stochastic flag is checked against the rows") {
  auto t = small_tensor(true);
  t.at(0, 0, 0, 0) += 0.01f;
  try {
    decode_attention(encode_attention(t));
    FAIL("expected a row-sum failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNotRowStochastic);
  }
  t.row_stochastic = false;
  CHECK_NOTHROW(decode_attention(encode_attention(t)));
}

TEST_CASE("negative attention is rejected") {
  auto t = small_tensor(false);
  t.at(1, 2, 3, 4) = -0.5f;
  CHECK_THROWS_AS(decode_attention(encode_attention(t)), Error);
}

TEST_CASE("token meta parses modality strings and optional text") {
  const auto meta = parse_token_meta(R"({"ctx_modality":"vvlvl","gen_text":["a","b"]})");
  CHECK(meta.visual_indices() == std::vector<std::size_t>{0, 1, 3});
  REQUIRE(meta.gen_text.has_value());
  CHECK(meta.gen_text->size() == 2);
  CHECK(parse_token_meta(dump_token_meta(meta)).visual_indices() == meta.visual_indices());

  const auto bare = parse_token_meta(R"({"ctx_modality":"lv"})");
  CHECK_FALSE(bare.gen_text.has_value());

  CHECK_THROWS_AS(parse_token_meta(R"({"ctx_modality":"vxl"})"), Error);
  CHECK_THROWS_AS(parse_token_meta("{not json"), Error);
  CHECK_THROWS_AS(parse_token_meta(R"({"gen_text":[]})"), Error);
}

TEST_CASE("token meta length checks") {
  const auto path = std::filesystem::temp_directory_path() / "atrl_meta_test.json";
  save_token_meta(parse_token_meta(R"({"ctx_modality":"vvl","gen_text":["x"]})"), path);
  CHECK_NOTHROW(load_token_meta(path, 3, 1));
  CHECK_THROWS_AS(load_token_meta(path, 4), Error);
  CHECK_THROWS_AS(load_token_meta(path, 3, 2), Error);
  std::filesystem::remove(path);
}
