// Verification reports: one record per check per sample point, serialized as
// deterministic JSON suitable for golden-file comparison.
#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "json.hpp"

namespace osc2 {

enum class CheckStatus { Pass, Fail, PreconditionUnmet };

inline const char* status_name(CheckStatus s) {
  switch (s) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    default: return "precondition unmet";
  }
}

struct CheckRecord {
  std::string id;   // stable machine-readable check identifier
  std::string eq;   // human-readable statement of the verified relation
  int point = 0;    // sample point index within the scenario
  int i = -1;       // connection row the record refers to; -1 when not row-specific
  double residual = 0;
  double tol = 0;
  CheckStatus status = CheckStatus::Pass;
  std::vector<std::string> assumptions;
};

struct Report {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<CheckRecord> checks;

  bool all_passed() const {
    return std::none_of(checks.begin(), checks.end(),
                        [](const CheckRecord& c) { return c.status == CheckStatus::Fail; });
  }
  std::size_t failures() const {
    return std::size_t(std::count_if(checks.begin(), checks.end(), [](const CheckRecord& c) {
      return c.status == CheckStatus::Fail;
    }));
  }
};

inline nlohmann::json report_to_json(const Report& rep) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : rep.checks) {
    nlohmann::json rec;
    rec["id"] = c.id;
    rec["eq"] = c.eq;
    rec["point"] = c.point;
    if (c.i >= 0)
      rec["i"] = c.i;
    else
      rec["i"] = nullptr;
    rec["residual"] = c.residual;
    rec["tol"] = c.tol;
    rec["status"] = status_name(c.status);
    rec["assumptions"] = c.assumptions;
    checks.push_back(std::move(rec));
  }
  nlohmann::json out;
  out["scenario"] = rep.scenario;
  out["seed"] = rep.seed;
  out["checks"] = std::move(checks);
  return out;
}

inline std::string report_to_string(const Report& rep) { return report_to_json(rep).dump(2) + "\n"; }

}  // namespace osc2
