// SPDX-License-Identifier: Apache-2.0

#include "atrl/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "atrl/error.hpp"
#include "atrl/report.hpp"

namespace atrl {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double parse_double(std::string_view key, std::string_view value) {
  try {
    std::size_t used = 0;
    const std::string text(value);
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidParameter,
                "cannot parse '" + std::string(value) + "' for " + std::string(key));
  }
}

std::uint64_t parse_uint(std::string_view key, std::string_view value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw Error(ErrorCode::kInvalidParameter,
                "cannot parse '" + std::string(value) + "' for " + std::string(key));
  }
  return v;
}

}  // namespace

std::string_view to_string(Engine engine) noexcept {
  switch (engine) {
    case Engine::kGrpo: return "grpo";
    case Engine::kGrpoKlFree: return "grpo-klfree";
    case Engine::kReinforce: return "reinforce";
  }
  return "unknown";
}

std::optional<Engine> parse_engine(std::string_view text) noexcept {
  if (text == "grpo") return Engine::kGrpo;
  if (text == "grpo-klfree") return Engine::kGrpoKlFree;
  if (text == "reinforce") return Engine::kReinforce;
  return std::nullopt;
}

void PipelineConfig::validate() const {
  bias.validate();
  refine.validate();
  surrogate.validate();
  if (!(tau_sim >= 0.0 && tau_sim < 1.0)) throw Error(ErrorCode::kInvalidParameter, "tau-sim must lie in [0, 1)");
  if (!(eps_bal >= 0.0)) throw Error(ErrorCode::kInvalidParameter, "eps-bal must be >= 0");
  if (!(hard_p > 0.0 && hard_p <= 1.0)) throw Error(ErrorCode::kBadFraction, "hard-p must lie in (0, 1]");
  if (group_size < 2) throw Error(ErrorCode::kGroupTooSmall, "group size must be at least 2");
  if (histogram_bins == 0) throw Error(ErrorCode::kInvalidParameter, "histogram needs at least one bin");
  if (top_layers && *top_layers == 0) throw Error(ErrorCode::kTopLayersOutOfRange, "top-layers must be >= 1");
  if (k && *k == 0) throw Error(ErrorCode::kInvalidParameter, "k must be >= 1");
}

std::size_t PipelineConfig::resolve_top_layers(std::size_t layers) const {
  return top_layers ? *top_layers : std::min(kDefaultTopLayers, layers);
}

std::size_t PipelineConfig::resolve_k(std::size_t gen_len) const {
  return k ? *k : cluster_count(gen_len);
}

KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kMalformedInput, "config line " + std::to_string(line_no) + " has no '='");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(ErrorCode::kMalformedInput, "empty key on line " + std::to_string(line_no));
    out.insert_or_assign(std::string(key), std::string(value));
  }
  return out;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str());
}

const std::vector<std::string>& pipeline_keys() {
  static const std::vector<std::string> keys{
      "top-layers", "lambda-exp", "gamma",       "lambda-cos", "bias-axis",  "tau-sim",
      "k",          "eps-bal",    "seed",        "tau-cen",    "alpha",      "q",
      "r-neighbors", "lambda-sim", "lambda-imp", "tau-nb",     "central-by", "mode",
      "hard-p",     "eps-low",    "eps-high",    "beta",       "engine",     "group-size",
      "bins"};
  return keys;
}

void apply_setting(PipelineConfig& c, std::string_view key, std::string_view value) {
  auto d = [&] { return parse_double(key, value); };
  auto u = [&] { return parse_uint(key, value); };
  auto bad = [&] {
    return Error(ErrorCode::kInvalidParameter,
                 "unsupported value '" + std::string(value) + "' for " + std::string(key));
  };
  if (key == "top-layers") {
    if (value == "auto") c.top_layers.reset(); else c.top_layers = u();
  } else if (key == "lambda-exp") {
    c.bias.lambda_exp = d();
  } else if (key == "gamma") {
    c.bias.gamma = d();
  } else if (key == "lambda-cos") {
    c.bias.lambda_cos = d();
  } else if (key == "bias-axis") {
    if (value == "gen") c.bias_axis = BiasAxis::kGenerated;
    else if (value == "ctx") c.bias_axis = BiasAxis::kContext;
    else throw bad();
  } else if (key == "tau-sim") {
    c.tau_sim = d();
  } else if (key == "k") {
    if (value == "auto") c.k.reset(); else c.k = u();
  } else if (key == "eps-bal") {
    c.eps_bal = d();
  } else if (key == "seed") {
    c.seed = u();
  } else if (key == "tau-cen") {
    c.refine.tau_cen = d();
  } else if (key == "alpha") {
    c.refine.alpha = d();
  } else if (key == "q") {
    c.refine.q = d();
  } else if (key == "r-neighbors") {
    c.refine.r_neighbors = u();
  } else if (key == "lambda-sim") {
    c.refine.lambda_sim = d();
  } else if (key == "lambda-imp") {
    c.refine.lambda_imp = d();
  } else if (key == "tau-nb") {
    c.refine.tau_nb = d();
  } else if (key == "central-by") {
    if (value == "degree") c.refine.central_by = CentralBy::kDegree;
    else if (value == "phi") c.refine.central_by = CentralBy::kPhi;
    else throw bad();
  } else if (key == "mode") {
    const auto m = parse_weighting_mode(value);
    if (!m) throw bad();
    c.mode = *m;
  } else if (key == "hard-p") {
    c.hard_p = d();
  } else if (key == "eps-low") {
    c.surrogate.eps_low = d();
  } else if (key == "eps-high") {
    c.surrogate.eps_high = d();
  } else if (key == "beta") {
    c.surrogate.beta = d();
  } else if (key == "engine") {
    const auto e = parse_engine(value);
    if (!e) throw bad();
    c.engine = *e;
  } else if (key == "group-size") {
    c.group_size = u();
  } else if (key == "bins") {
    c.histogram_bins = u();
  } else {
    throw Error(ErrorCode::kInvalidParameter, "unknown config key '" + std::string(key) + "'");
  }
}

void apply_settings(PipelineConfig& config, const KeyValues& values) {
  for (const auto& [key, value] : values) apply_setting(config, key, value);
}

std::string get_setting(const PipelineConfig& c, std::string_view key) {
  if (key == "top-layers") return c.top_layers ? std::to_string(*c.top_layers) : "auto";
  if (key == "lambda-exp") return format_g9(c.bias.lambda_exp);
  if (key == "gamma") return format_g9(c.bias.gamma);
  if (key == "lambda-cos") return format_g9(c.bias.lambda_cos);
  if (key == "bias-axis") return c.bias_axis == BiasAxis::kGenerated ? "gen" : "ctx";
  if (key == "tau-sim") return format_g9(c.tau_sim);
  if (key == "k") return c.k ? std::to_string(*c.k) : "auto";
  if (key == "eps-bal") return format_g9(c.eps_bal);
  if (key == "seed") return std::to_string(c.seed);
  if (key == "tau-cen") return format_g9(c.refine.tau_cen);
  if (key == "alpha") return format_g9(c.refine.alpha);
  if (key == "q") return format_g9(c.refine.q);
  if (key == "r-neighbors") return std::to_string(c.refine.r_neighbors);
  if (key == "lambda-sim") return format_g9(c.refine.lambda_sim);
  if (key == "lambda-imp") return format_g9(c.refine.lambda_imp);
  if (key == "tau-nb") return format_g9(c.refine.tau_nb);
  if (key == "central-by") return c.refine.central_by == CentralBy::kDegree ? "degree" : "phi";
  if (key == "mode") return std::string(to_string(c.mode));
  if (key == "hard-p") return format_g9(c.hard_p);
  if (key == "eps-low") return format_g9(c.surrogate.eps_low);
  if (key == "eps-high") return format_g9(c.surrogate.eps_high);
  if (key == "beta") return format_g9(c.surrogate.beta);
  if (key == "engine") return std::string(to_string(c.engine));
  if (key == "group-size") return std::to_string(c.group_size);
  if (key == "bins") return std::to_string(c.histogram_bins);
  throw Error(ErrorCode::kInvalidParameter, "unknown config key '" + std::string(key) + "'");
}

}  // namespace atrl
