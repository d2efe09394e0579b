// Scenario files: JSON descriptions of an ambient metric, an embedding, and
// the sample points at which the verification suite runs.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "osc2/connections.hpp"

namespace osc2 {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An optional submanifold reparametrization u ~> phi(u).  The inverse is
// spelled out explicitly so the embedding can be rewritten in the new chart;
// the runner uses the pair for coordinate-invariance checks.
struct ChartChange {
  std::vector<std::string> map;      // m expressions in u1..um
  std::vector<std::string> inverse;  // m expressions undoing them
};

struct Scenario {
  std::string name;
  int n = 0, m = 0;
  std::vector<std::vector<std::string>> metric;  // n x n expressions
  std::vector<std::string> embedding;            // n expressions in u1..um
  std::vector<JetPoint> points;                  // sample sub-jets (u, v1, v2)
  std::optional<ChartChange> chart_change;
  std::uint64_t seed = 42;
  int trials = 50;
  std::map<std::string, double> tolerances;

  AmbientSpace make_ambient() const { return AmbientSpace::from_strings(n, metric); }
  Embedding make_embedding() const { return Embedding::from_strings(n, m, embedding); }
  double tol(const std::string& key) const {
    auto it = tolerances.find(key);
    if (it == tolerances.end()) throw ScenarioError("unknown tolerance key: " + key);
    return it->second;
  }
};

namespace detail {

inline std::map<std::string, double> default_tolerances() {
  return {
      {"frame", 1e-10},      {"restriction", 1e-9}, {"projection", 1e-9},
      {"deflection", 1e-9},  {"extraction", 1e-8},  {"identity", 1e-8},
      {"oracle", 1e-6},      {"pattern", 1e-9},
  };
}

inline std::vector<double> number_list(const nlohmann::json& j, const std::string& where,
                                       std::size_t want) {
  if (!j.is_array() || j.size() != want) {
    std::ostringstream os;
    os << where << " must be an array of " << want << " numbers";
    throw ScenarioError(os.str());
  }
  std::vector<double> out;
  out.reserve(want);
  for (const auto& x : j) {
    if (!x.is_number()) throw ScenarioError(where + " must contain only numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline std::vector<std::string> string_list(const nlohmann::json& j, const std::string& where,
                                            std::size_t want) {
  if (!j.is_array() || j.size() != want) {
    std::ostringstream os;
    os << where << " must be an array of " << want << " expression strings";
    throw ScenarioError(os.str());
  }
  std::vector<std::string> out;
  out.reserve(want);
  for (const auto& x : j) {
    if (!x.is_string()) throw ScenarioError(where + " must contain only strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

}  // namespace detail

inline Scenario scenario_from_json(const nlohmann::json& j, const std::string& origin) {
  if (!j.is_object()) throw ScenarioError(origin + ": top level must be a JSON object");
  auto require = [&](const char* key) -> const nlohmann::json& {
    auto it = j.find(key);
    if (it == j.end()) throw ScenarioError(origin + ": missing required key \"" + key + "\"");
    return *it;
  };

  Scenario sc;
  sc.name = j.value("name", origin);
  const auto& jn = require("n");
  const auto& jm = require("m");
  if (!jn.is_number_integer() || !jm.is_number_integer())
    throw ScenarioError(origin + ": \"n\" and \"m\" must be integers");
  sc.n = jn.get<int>();
  sc.m = jm.get<int>();
  if (!(1 < sc.m && sc.m < sc.n))
    throw ScenarioError(origin + ": invalid dimensions n=" + std::to_string(sc.n) +
                        ", m=" + std::to_string(sc.m) + ". We assume 1<m<n.");

  const auto& jg = require("metric");
  if (!jg.is_array() || jg.size() != std::size_t(sc.n))
    throw ScenarioError(origin + ": \"metric\" must be an n x n array of expression strings");
  for (int a = 0; a < sc.n; ++a)
    sc.metric.push_back(
        detail::string_list(jg[a], origin + ": metric row " + std::to_string(a), sc.n));

  sc.embedding = detail::string_list(require("embedding"), origin + ": \"embedding\"", sc.n);

  const auto& jp = require("points");
  if (!jp.is_array() || jp.empty())
    throw ScenarioError(origin + ": \"points\" must be a non-empty array");
  for (std::size_t k = 0; k < jp.size(); ++k) {
    const auto& pt = jp[k];
    const std::string where = origin + ": point " + std::to_string(k);
    if (!pt.is_object() || !pt.contains("u") || !pt.contains("v1") || !pt.contains("v2"))
      throw ScenarioError(where + " must be an object with keys u, v1, v2");
    JetPoint q;
    q.x = detail::number_list(pt["u"], where + ".u", sc.m);
    q.y1 = detail::number_list(pt["v1"], where + ".v1", sc.m);
    q.y2 = detail::number_list(pt["v2"], where + ".v2", sc.m);
    sc.points.push_back(std::move(q));
  }

  if (j.contains("chart_change") && !j["chart_change"].is_null()) {
    const auto& cc = j["chart_change"];
    if (!cc.is_object() || !cc.contains("map") || !cc.contains("inverse"))
      throw ScenarioError(origin + ": \"chart_change\" must carry \"map\" and \"inverse\"");
    ChartChange ch;
    ch.map = detail::string_list(cc["map"], origin + ": chart_change.map", sc.m);
    ch.inverse = detail::string_list(cc["inverse"], origin + ": chart_change.inverse", sc.m);
    sc.chart_change = std::move(ch);
  }

  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer()) throw ScenarioError(origin + ": \"seed\" must be an integer");
    sc.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("trials")) {
    if (!j["trials"].is_number_integer() || j["trials"].get<int>() < 1)
      throw ScenarioError(origin + ": \"trials\" must be a positive integer");
    sc.trials = j["trials"].get<int>();
  }

  sc.tolerances = detail::default_tolerances();
  if (j.contains("tolerances")) {
    const auto& jt = j["tolerances"];
    if (!jt.is_object()) throw ScenarioError(origin + ": \"tolerances\" must be an object");
    for (auto it = jt.begin(); it != jt.end(); ++it) {
      if (sc.tolerances.find(it.key()) == sc.tolerances.end())
        throw ScenarioError(origin + ": unknown tolerance \"" + it.key() + "\"");
      if (!it.value().is_number())
        throw ScenarioError(origin + ": tolerance \"" + it.key() + "\" must be a number");
      sc.tolerances[it.key()] = it.value().get<double>();
    }
  }

  // fail early if any expression does not parse
  try {
    sc.make_ambient();
    sc.make_embedding();
    if (sc.chart_change) {
      for (const auto& s : sc.chart_change->map) parse(s);
      for (const auto& s : sc.chart_change->inverse) parse(s);
    }
  } catch (const std::exception& ex) {
    throw ScenarioError(origin + ": " + ex.what());
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& ex) {
    std::ostringstream os;
    os << path << ": JSON parse error at byte " << ex.byte << ": " << ex.what();
    throw ScenarioError(os.str());
  }
  return scenario_from_json(j, path);
}

}  // namespace osc2
