// Command-line runner: verifies scenario files against the identity suite and
// dumps computed frames, deflections, and commutator coefficients.
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "osc2/runner.hpp"

namespace {

int run_verify(const std::string& path, const osc2::RunOptions& opt,
               const std::string& report_path) {
  osc2::Scenario sc = osc2::load_scenario(path);
  osc2::Report rep = osc2::run_scenario(sc, opt);

  for (const auto& c : rep.checks) {
    std::printf("[%s] %s (point %d%s) residual=%.3e tol=%.1e\n",
                c.status == osc2::CheckStatus::Pass      ? "pass"
                : c.status == osc2::CheckStatus::Fail    ? "FAIL"
                                                         : "skip",
                c.id.c_str(), c.point,
                c.i >= 0 ? (", i=" + std::to_string(c.i)).c_str() : "", c.residual, c.tol);
    if (c.status == osc2::CheckStatus::PreconditionUnmet)
      std::printf("       precondition unmet: deflections do not take the special pattern\n");
  }
  const std::size_t fails = rep.failures();
  std::printf("%s: %zu checks, %zu failed\n", sc.name.c_str(), rep.checks.size(), fails);

  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) {
      std::fprintf(stderr, "cannot write report file: %s\n", report_path.c_str());
      return 2;
    }
    out << osc2::report_to_string(rep);
  }
  return fails == 0 ? 0 : 1;
}

int run_dump(const std::string& path, const std::string& what, int point) {
  osc2::Scenario sc = osc2::load_scenario(path);
  if (point < 0 || point >= int(sc.points.size()))
    throw osc2::ScenarioError(path + ": point index " + std::to_string(point) +
                              " out of range (have " + std::to_string(sc.points.size()) +
                              " points)");
  nlohmann::json out;
  if (what == "frames")
    out = osc2::dump_frames(sc, point);
  else if (what == "deflections")
    out = osc2::dump_deflections(sc, point);
  else
    out = osc2::dump_coefficients(sc, point);
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"verification suite for second-order jet submanifold geometry"};
  app.require_subcommand(1);

  std::string scenario_path, report_path, what = "coefficients";
  double tol = 0;
  std::uint64_t seed = 0;
  int trials = 0, point = 0;

  auto* verify = app.add_subcommand("verify", "run every check at every sample point");
  verify->add_option("scenario", scenario_path, "scenario JSON file")->required();
  auto* tol_opt = verify->add_option("--tol", tol, "override every tolerance");
  auto* seed_opt = verify->add_option("--seed", seed, "override the scenario seed");
  auto* trials_opt = verify->add_option("--trials", trials, "random probe fields per check");
  verify->add_option("--report", report_path, "write the JSON report here");

  auto* dump = app.add_subcommand("dump", "print computed objects as JSON");
  dump->add_option("scenario", scenario_path, "scenario JSON file")->required();
  dump->add_option("--what", what, "coefficients | frames | deflections")
      ->check(CLI::IsMember({"coefficients", "frames", "deflections"}));
  dump->add_option("--point", point, "sample point index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(verify)) {
      osc2::RunOptions opt;
      if (tol_opt->count()) opt.tol = tol;
      if (seed_opt->count()) opt.seed = seed;
      if (trials_opt->count()) opt.trials = trials;
      return run_verify(scenario_path, opt, report_path);
    }
    return run_dump(scenario_path, what, point);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 2;
  }
}
