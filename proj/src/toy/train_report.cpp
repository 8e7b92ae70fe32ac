// SPDX-License-Identifier: Apache-2.0

#include "atrl/toy/train_report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "atrl/error.hpp"
#include "atrl/report.hpp"

namespace atrl::toy {
namespace {

using json = nlohmann::ordered_json;

constexpr const char* kFormat = "atrl-train-report";
constexpr int kVersion = 1;

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) {
  if (s.size() != 16) throw Error(ErrorCode::kMalformedInput, "digest must be 16 hex digits");
  std::uint64_t v = 0;
  for (char ch : s) {
    v <<= 4;
    if (ch >= '0' && ch <= '9') v |= static_cast<std::uint64_t>(ch - '0');
    else if (ch >= 'a' && ch <= 'f') v |= static_cast<std::uint64_t>(ch - 'a' + 10);
    else throw Error(ErrorCode::kMalformedInput, "digest must be lowercase hex");
  }
  return v;
}

json stage_json(const StageTimings& s) {
  return {{"aggregate", s.aggregate}, {"debias", s.debias},       {"connectivity", s.connectivity},
          {"graph", s.graph},         {"partition", s.partition}, {"refine", s.refine},
          {"weights", s.weights}};
}

StageTimings stage_from(const json& j) {
  StageTimings s;
  s.aggregate = j.at("aggregate").get<double>();
  s.debias = j.at("debias").get<double>();
  s.connectivity = j.at("connectivity").get<double>();
  s.graph = j.at("graph").get<double>();
  s.partition = j.at("partition").get<double>();
  s.refine = j.at("refine").get<double>();
  s.weights = j.at("weights").get<double>();
  return s;
}

json run_json(const SeedRun& r) {
  json digests = json::array();
  for (auto d : r.digest) digests.push_back(hex64(d));
  const auto& a = r.anchors;
  const auto& t = r.timings;
  return {
      {"seed", r.seed},
      {"reward", r.reward},
      {"param_digest", digests},
      {"steps_to_threshold", r.steps_to_threshold ? json(*r.steps_to_threshold) : json(nullptr)},
      {"final_reward", r.final_reward},
      {"anchors",
       {{"tokens", a.tokens},
        {"threshold", a.threshold},
        {"above", a.above},
        {"anchor_fraction", a.anchor_fraction()},
        {"answer_mean_c", a.answer_mean_c},
        {"other_mean_c", a.other_mean_c}}},
      {"timings",
       {{"rollout", t.rollout},
        {"credit", stage_json(t.credit)},
        {"credit_total", t.credit.total()},
        {"objective", t.objective},
        {"update", t.update},
        {"total", t.total}}},
  };
}

SeedRun run_from(const json& j) {
  SeedRun r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.reward = j.at("reward").get<std::vector<double>>();
  for (const auto& d : j.at("param_digest")) r.digest.push_back(parse_hex64(d.get<std::string>()));
  if (!j.at("steps_to_threshold").is_null()) r.steps_to_threshold = j.at("steps_to_threshold").get<std::size_t>();
  r.final_reward = j.at("final_reward").get<double>();
  const auto& a = j.at("anchors");
  r.anchors.tokens = a.at("tokens").get<std::size_t>();
  r.anchors.threshold = a.at("threshold").get<double>();
  r.anchors.above = a.at("above").get<std::size_t>();
  r.anchors.answer_mean_c = a.at("answer_mean_c").get<double>();
  r.anchors.other_mean_c = a.at("other_mean_c").get<double>();
  const auto& t = j.at("timings");
  r.timings.rollout = t.at("rollout").get<double>();
  r.timings.credit = stage_from(t.at("credit"));
  r.timings.objective = t.at("objective").get<double>();
  r.timings.update = t.at("update").get<double>();
  r.timings.total = t.at("total").get<double>();
  return r;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> describe(const TrainConfig& c) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& key : pipeline_keys()) out.emplace_back(key, get_setting(c.pipeline, key));
  for (const auto& key : train_keys()) out.emplace_back(key, get_train_setting(c, key));
  return out;
}

std::string dump_train_report(const TrainReport& report) {
  json config = json::object();
  for (const auto& [k, v] : report.config) config[k] = v;
  json variants = json::array();
  for (const auto& v : report.variants) {
    json runs = json::array();
    for (const auto& r : v.runs) runs.push_back(run_json(r));
    variants.push_back({{"label", v.label},
                        {"mode", std::string(to_string(v.mode))},
                        {"engine", std::string(to_string(v.engine))},
                        {"hard_p", v.hard_p},
                        {"beta", v.beta},
                        {"steps", v.steps},
                        {"mean_final_reward", v.mean_final_reward()},
                        {"runs", runs}});
  }
  const json doc = {{"format", kFormat}, {"version", kVersion}, {"config", config}, {"variants", variants}};
  return doc.dump(1) + "\n";
}

TrainReport parse_train_report(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format").get<std::string>() != kFormat || doc.at("version").get<int>() != kVersion) {
      throw Error(ErrorCode::kMalformedInput, "not a version 1 train report");
    }
    TrainReport report;
    for (const auto& [k, v] : doc.at("config").items()) report.config.emplace_back(k, v.get<std::string>());
    for (const auto& vj : doc.at("variants")) {
      VariantReport v;
      v.label = vj.at("label").get<std::string>();
      const auto mode = parse_weighting_mode(vj.at("mode").get<std::string>());
      const auto engine = parse_engine(vj.at("engine").get<std::string>());
      if (!mode || !engine) throw Error(ErrorCode::kMalformedInput, "unknown mode or engine in train report");
      v.mode = *mode;
      v.engine = *engine;
      v.hard_p = vj.at("hard_p").get<double>();
      v.beta = vj.at("beta").get<double>();
      v.steps = vj.at("steps").get<std::size_t>();
      for (const auto& rj : vj.at("runs")) v.runs.push_back(run_from(rj));
      report.variants.push_back(std::move(v));
    }
    return report;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedInput, std::string("train report: ") + e.what());
  }
}

void save_train_report(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  out << dump_train_report(report);
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed for " + path.string());
}

TrainReport load_train_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_train_report(ss.str());
}

bool operator==(const ToyTimings& a, const ToyTimings& b) noexcept {
  const auto& x = a.credit;
  const auto& y = b.credit;
  return a.rollout == b.rollout && a.objective == b.objective && a.update == b.update && a.total == b.total &&
         x.aggregate == y.aggregate && x.debias == y.debias && x.connectivity == y.connectivity &&
         x.graph == y.graph && x.partition == y.partition && x.refine == y.refine && x.weights == y.weights;
}

bool operator==(const AnchorStats& a, const AnchorStats& b) noexcept {
  return a.tokens == b.tokens && a.threshold == b.threshold && a.above == b.above &&
         a.answer_mean_c == b.answer_mean_c && a.other_mean_c == b.other_mean_c;
}

bool same_serialised(const TrainReport& a, const TrainReport& b) noexcept {
  if (a.config != b.config || a.variants.size() != b.variants.size()) return false;
  for (std::size_t i = 0; i < a.variants.size(); ++i) {
    const auto& x = a.variants[i];
    const auto& y = b.variants[i];
    if (x.label != y.label || x.mode != y.mode || x.engine != y.engine || x.hard_p != y.hard_p ||
        x.beta != y.beta || x.steps != y.steps || x.runs.size() != y.runs.size()) {
      return false;
    }
    for (std::size_t r = 0; r < x.runs.size(); ++r) {
      const auto& p = x.runs[r];
      const auto& q = y.runs[r];
      if (p.seed != q.seed || p.reward != q.reward || p.digest != q.digest ||
          p.steps_to_threshold != q.steps_to_threshold || p.final_reward != q.final_reward ||
          !(p.anchors == q.anchors) || !(p.timings == q.timings)) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace atrl::toy
