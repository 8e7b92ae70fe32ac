// SPDX-License-Identifier: Apache-2.0

#include "atrl/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "atrl/error.hpp"

namespace atrl {
namespace {

constexpr std::array<std::uint8_t, 4> kMagic{0x41, 0x54, 0x4E, 0x31};  // "ATN1"
constexpr std::size_t kHeaderBytes = 4 + 4 * 4 + 1;
constexpr std::uint8_t kFlagRowStochastic = 0x01;

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

void write_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

void check_dims(std::uint32_t l, std::uint32_t h, std::uint32_t t, std::uint32_t s) {
  for (std::uint32_t d : {l, h, t, s}) {
    if (d > kMaxDim) {
      throw Error(ErrorCode::kDimOverflow, "dimension " + std::to_string(d) + " exceeds 2^20");
    }
    if (d == 0) {
      throw Error(ErrorCode::kInvalidDimension, "all dimensions must be at least 1");
    }
  }
}

}  // namespace

AttentionTensor AttentionTensor::zeros(std::uint32_t layers, std::uint32_t heads,
                                       std::uint32_t gen_len, std::uint32_t ctx_len,
                                       bool row_stochastic) {
  check_dims(layers, heads, gen_len, ctx_len);
  AttentionTensor t;
  t.layers = layers;
  t.heads = heads;
  t.gen_len = gen_len;
  t.ctx_len = ctx_len;
  t.row_stochastic = row_stochastic;
  t.values.assign(t.size(), 0.0f);
  return t;
}

void AttentionTensor::validate() const {
  check_dims(layers, heads, gen_len, ctx_len);
  if (values.size() != size()) {
    throw Error(ErrorCode::kTruncatedPayload, "value count " + std::to_string(values.size()) +
                                                  " does not match dims product " +
                                                  std::to_string(size()));
  }
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      throw Error(ErrorCode::kNonFiniteValue, "non-finite value at flat index " + std::to_string(k));
    }
    if (values[k] < 0.0f) {
      throw Error(ErrorCode::kNegativeValue, "negative value at flat index " + std::to_string(k));
    }
  }
  if (!row_stochastic) return;
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < gen_len; ++i) {
        double sum = 0.0;
        for (float v : row(l, h, i)) sum += v;
        if (std::abs(sum - 1.0) > kRowSumTolerance) {
          throw Error(ErrorCode::kNotRowStochastic,
                      "row (" + std::to_string(l) + "," + std::to_string(h) + "," +
                          std::to_string(i) + ") sums to " + std::to_string(sum));
        }
      }
    }
  }
}

std::vector<std::uint8_t> encode_attention(const AttentionTensor& tensor) {
  tensor.validate();
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.reserve(kHeaderBytes + 4 * tensor.values.size());
  write_u32_le(out, tensor.layers);
  write_u32_le(out, tensor.heads);
  write_u32_le(out, tensor.gen_len);
  write_u32_le(out, tensor.ctx_len);
  out.push_back(tensor.row_stochastic ? kFlagRowStochastic : 0);
  for (float v : tensor.values) write_u32_le(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

AttentionTensor decode_attention(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw Error(ErrorCode::kBadMagic, "missing ATN1 magic");
  }
  if (bytes.size() < kHeaderBytes) {
    throw Error(ErrorCode::kTruncatedPayload, "header shorter than 21 bytes");
  }
  const std::uint8_t* p = bytes.data() + 4;
  const std::uint32_t l = read_u32_le(p);
  const std::uint32_t h = read_u32_le(p + 4);
  const std::uint32_t t = read_u32_le(p + 8);
  const std::uint32_t s = read_u32_le(p + 12);
  const std::uint8_t flags = p[16];
  check_dims(l, h, t, s);

  // The dim product can exceed 64 bits; divide the payload down instead of
  // multiplying the dims up.
  const std::size_t payload = bytes.size() - kHeaderBytes;
  std::uint64_t remaining = payload / 4;
  bool matches = payload % 4 == 0;
  for (std::uint32_t d : {l, h, t}) {
    matches = matches && remaining % d == 0;
    if (matches) remaining /= d;
  }
  matches = matches && remaining == s;
  if (!matches) {
    throw Error(ErrorCode::kTruncatedPayload,
                "payload holds " + std::to_string(payload / 4) + " values (+" +
                    std::to_string(payload % 4) + " bytes), header declares " + std::to_string(l) + "x" +
                    std::to_string(h) + "x" + std::to_string(t) + "x" + std::to_string(s));
  }

  AttentionTensor tensor;
  tensor.layers = l;
  tensor.heads = h;
  tensor.gen_len = t;
  tensor.ctx_len = s;
  tensor.row_stochastic = (flags & kFlagRowStochastic) != 0;
  tensor.values.resize(payload / 4);
  const std::uint8_t* data = bytes.data() + kHeaderBytes;
  for (std::size_t k = 0; k < tensor.values.size(); ++k) {
    tensor.values[k] = std::bit_cast<float>(read_u32_le(data + 4 * k));
  }
  tensor.validate();
  return tensor;
}

AttentionTensor load_attention(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIoFailure, "read failed for " + path.string());
  return decode_attention(bytes);
}

void save_attention(const AttentionTensor& tensor, const std::filesystem::path& path) {
  const auto bytes = encode_attention(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed for " + path.string());
}

std::vector<std::size_t> TokenMeta::visual_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < ctx_modality.size(); ++j) {
    if (ctx_modality[j] == Modality::kVision) out.push_back(j);
  }
  return out;
}

TokenMeta parse_token_meta(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedInput, std::string("token meta is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("ctx_modality") || !doc["ctx_modality"].is_string()) {
    throw Error(ErrorCode::kMalformedInput, "token meta needs a string field ctx_modality");
  }
  TokenMeta meta;
  const auto labels = doc["ctx_modality"].get<std::string>();
  meta.ctx_modality.reserve(labels.size());
  for (std::size_t j = 0; j < labels.size(); ++j) {
    switch (labels[j]) {
      case 'v': meta.ctx_modality.push_back(Modality::kVision); break;
      case 'l': meta.ctx_modality.push_back(Modality::kLanguage); break;
      default:
        throw Error(ErrorCode::kUnknownModalityLabel,
                    "label '" + std::string(1, labels[j]) + "' at position " + std::to_string(j));
    }
  }
  if (doc.contains("gen_text") && !doc["gen_text"].is_null()) {
    const auto& arr = doc["gen_text"];
    if (!arr.is_array()) throw Error(ErrorCode::kMalformedInput, "gen_text must be an array");
    std::vector<std::string> tokens;
    for (const auto& tok : arr) {
      if (!tok.is_string()) throw Error(ErrorCode::kMalformedInput, "gen_text entries must be strings");
      tokens.push_back(tok.get<std::string>());
    }
    meta.gen_text = std::move(tokens);
  }
  return meta;
}

TokenMeta load_token_meta(const std::filesystem::path& path,
                          std::optional<std::size_t> expected_ctx_len,
                          std::optional<std::size_t> expected_gen_len) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  TokenMeta meta = parse_token_meta(buf.str());
  if (expected_ctx_len && meta.ctx_modality.size() != *expected_ctx_len) {
    throw Error(ErrorCode::kLengthMismatch,
                "ctx_modality has " + std::to_string(meta.ctx_modality.size()) +
                    " labels, tensor has S=" + std::to_string(*expected_ctx_len));
  }
  if (expected_gen_len && meta.gen_text && meta.gen_text->size() != *expected_gen_len) {
    throw Error(ErrorCode::kLengthMismatch,
                "gen_text has " + std::to_string(meta.gen_text->size()) +
                    " tokens, tensor has T=" + std::to_string(*expected_gen_len));
  }
  return meta;
}

std::string dump_token_meta(const TokenMeta& meta) {
  std::string labels;
  labels.reserve(meta.ctx_modality.size());
  for (auto m : meta.ctx_modality) labels.push_back(m == Modality::kVision ? 'v' : 'l');
  nlohmann::json doc;
  doc["ctx_modality"] = labels;
  if (meta.gen_text) doc["gen_text"] = *meta.gen_text;
  return doc.dump(1) + "\n";
}

void save_token_meta(const TokenMeta& meta, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string() + " for writing");
  out << dump_token_meta(meta);
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed for " + path.string());
}

}  // namespace atrl
