// Command-line scenario runner: loads a JSON scenario, executes its checks
// and writes one report. Exit 0 when every expectation holds, 1 when a check
// misses its expectation, 2 on validation, IO or runtime errors.
#include "pq/scenario.hpp"

#include "CLI11.hpp"

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <optional>
#include <string>

namespace {

std::string utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void print_entry(const pq::ScenarioRun::Entry& e, double scenario_tol) {
  if (!e.error.empty()) {
    std::printf("%s: error: %s\n", e.spec.name.c_str(), e.error.c_str());
    return;
  }
  const double tol = e.spec.tol.value_or(scenario_tol);
  const char* verdict = e.report.pass() ? "pass" : "fail";
  const char* expectation = "";
  if (e.spec.expect_fail) {
    expectation = e.satisfied ? " (expected failure)" : ", expected fail";
  }
  std::printf("%s: %s%s (max residual %.3g, tol %.3g)\n", e.spec.name.c_str(), verdict,
              expectation, e.report.max_residual(), tol);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scenario runner for almost para-quaternionic structure checks"};
  std::string scenario_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  int jobs = 1;
  app.add_option("--scenario", scenario_path, "scenario JSON file")->required();
  app.add_option("--seed", seed, "override the scenario seed");
  app.add_option("--tol", tol, "override the scenario tolerance");
  app.add_option("--out", out_path, "report path (overrides the scenario)");
  app.add_option("--jobs", jobs, "check worker pool size")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    pq::Scenario s = pq::load_scenario(scenario_path);
    if (seed) s.seed = *seed;
    if (tol) {
      if (!(*tol > 0.0)) throw pq::Error("tolerance must be positive");
      s.tolerance = *tol;
    }
    if (!out_path.empty()) s.out = out_path;
    if (s.out.empty()) {
      throw pq::Error("no output path: set \"out\" in the scenario or pass --out");
    }

    const pq::ScenarioRun run = pq::run_scenario(s, jobs);
    pq::write_text_atomic(s.out, pq::report_json(s, run, utc_now()));

    std::printf("structure: %s\n", run.structure_label.c_str());
    std::printf("points: %zu (seed %llu)\n", run.points.size(),
                static_cast<unsigned long long>(s.seed));
    for (const auto& e : run.entries) print_entry(e, s.tolerance);
    std::printf("report: %s\n", s.out.c_str());
    if (run.errored()) {
      std::fprintf(stderr, "error: a check failed to run; see the report\n");
      return 2;
    }
    std::printf("scenario %s\n", run.all_satisfied() ? "satisfied" : "not satisfied");
    return run.all_satisfied() ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
