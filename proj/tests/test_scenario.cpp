#include "doctest.h"

#include "pq/geometry.hpp"
#include "pq/scenario.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <string>

namespace {

const char* kFlatScenario = R"({
  "schema": "pq-scenario/1",
  "structure": {"generator": "flat", "m": 2},
  "samples": {"box": {"lo": -0.8, "hi": 0.8, "count": 4}},
  "tolerance": 1e-8,
  "seed": 31,
  "checks": [
    "admissible_basis",
    "quaternionicity_witness",
    {"name": "is_integrable", "section": [0.0, 1.0, 0.0]}
  ],
  "out": "flat.report.json"
})";

std::string patched(const char* base, const std::string& pointer,
                    const nlohmann::json& value) {
  nlohmann::json j = nlohmann::json::parse(base);
  j[nlohmann::json::json_pointer(pointer)] = value;
  return j.dump();
}

std::string without(const char* base, const std::string& key) {
  nlohmann::json j = nlohmann::json::parse(base);
  j.erase(key);
  return j.dump();
}

}  // namespace

TEST_CASE("scenario parsing: defaults, strict keys, validation errors") {
  const pq::Scenario s = pq::scenario_from_json(kFlatScenario);
  CHECK(s.structure.generator == "flat");
  CHECK(s.structure.m == 2);
  CHECK(s.samples.box);
  CHECK(s.samples.count == 4);
  CHECK(s.tolerance == doctest::Approx(1e-8));
  CHECK(s.seed == 31);
  CHECK(s.out == "flat.report.json");
  REQUIRE(s.checks.size() == 3);
  CHECK_FALSE(s.checks[0].expect_fail);
  CHECK_FALSE(s.checks[0].tol.has_value());
  CHECK(s.checks[2].section[1] == 1.0);

  const pq::Scenario defaults = pq::scenario_from_json(
      R"({"structure": {"generator": "flat", "m": 2},
          "samples": {"points": [[0.1, 0.2, 0.3, 0.4]]},
          "checks": ["admissible_basis"]})");
  CHECK(defaults.tolerance == doctest::Approx(1e-8));
  CHECK(defaults.seed == 0);
  CHECK(defaults.out.empty());
  CHECK_FALSE(defaults.samples.box);

  const pq::Scenario rich = pq::scenario_from_json(patched(
      kFlatScenario, "/checks/1",
      nlohmann::json{{"name", "twistor_nijenhuis"},
                     {"expect", "fail"},
                     {"tol", 1e-6},
                     {"eps", 1},
                     {"fibers", 3},
                     {"pairs", 5}}));
  CHECK(rich.checks[1].expect_fail);
  CHECK(rich.checks[1].tol.value() == doctest::Approx(1e-6));
  CHECK(rich.checks[1].eps == 1);
  CHECK(rich.checks[1].fibers == 3);
  CHECK(rich.checks[1].pairs == 5);

  CHECK_THROWS_WITH_AS(pq::scenario_from_json("{nope"),
                       doctest::Contains("scenario parse"), pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(patched(kFlatScenario, "/wibble", 1)),
      "unknown scenario key \"wibble\"", pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(patched(kFlatScenario, "/schema", "pq-scenario/9")),
      "unsupported scenario schema \"pq-scenario/9\"", pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(patched(kFlatScenario, "/checks/0", "holonomy_spectrum")),
      "unknown check \"holonomy_spectrum\"", pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(patched(
          kFlatScenario, "/checks/0",
          nlohmann::json{{"name", "quaternionicity_witness"}, {"expect", "maybe"}})),
      "check expect must be \"pass\" or \"fail\"", pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(patched(
          kFlatScenario, "/checks/0",
          nlohmann::json{{"name", "quaternionicity_witness"}, {"eps", 1}})),
      "unknown check \"quaternionicity_witness\" key \"eps\"", pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(patched(kFlatScenario, "/tolerance", 0.0)),
      "tolerance must be positive", pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(patched(kFlatScenario, "/checks",
                                     nlohmann::json::array())),
      "empty check list", pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(without(kFlatScenario, "samples")),
      "no sample points", pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(patched(kFlatScenario, "/samples/box/hi", -0.8)),
      "sample box needs lo < hi", pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(patched(kFlatScenario, "/checks/0", "pde_residual")),
      "check pde_residual needs the propo generator", pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(patched(
          kFlatScenario, "/checks/0",
          nlohmann::json{{"name", "twistor_nijenhuis"}, {"eps", 2}})),
      "check eps must be +-1", pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(patched(
          kFlatScenario, "/checks/2",
          nlohmann::json{{"name", "is_integrable"},
                         {"section", nlohmann::json::array({1.0, 1.0, 0.0})}})),
      "check section must satisfy -a1^2 + a2^2 + a3^2 = +-1", pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(patched(kFlatScenario, "/structure/generator", "sphere")),
      "unknown generator \"sphere\"", pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(patched(
          kFlatScenario, "/structure",
          nlohmann::json{{"generator", "propo"}, {"m", 1}, {"h", "const1"}})),
      "generator needs m >= 2", pq::Error);
  CHECK_THROWS_WITH_AS(
      pq::scenario_from_json(patched(
          kFlatScenario, "/structure",
          nlohmann::json{{"generator", "propo"}, {"m", 2}, {"h", "mystery"}})),
      "unknown slope function \"mystery\"", pq::Error);
}

TEST_CASE("scenario runs: flat passes every expectation with byte-stable reports") {
  const pq::Scenario s = pq::scenario_from_json(kFlatScenario);
  const pq::ScenarioRun serial = pq::run_scenario(s, 1);
  CHECK(serial.structure_label == "flat m=2");
  CHECK(serial.points.size() == 4);
  REQUIRE(serial.entries.size() == 3);
  for (const auto& e : serial.entries) {
    CHECK(e.error.empty());
    CHECK(e.satisfied);
    CHECK(e.report.pass());
  }
  CHECK(serial.all_satisfied());
  CHECK_FALSE(serial.errored());

  const pq::ScenarioRun pooled = pq::run_scenario(s, 3);
  CHECK(pq::report_json(s, serial) == pq::report_json(s, pooled));

  const std::string text = pq::report_json(s, serial);
  CHECK(text.find("generated") == std::string::npos);
  const std::string stamped = pq::report_json(s, serial, "2026-01-02T03:04:05Z");
  CHECK(stamped.find("\"generated\": \"2026-01-02T03:04:05Z\"") != std::string::npos);

  const nlohmann::json rj = nlohmann::json::parse(text);
  CHECK(rj.at("schema").get<std::string>() == pq::kReportSchema);
  CHECK(rj.at("toolkit").at("version").get<std::string>() == pq::kToolkitVersion);
  CHECK(rj.at("structure").get<std::string>() == "flat m=2");
  CHECK(rj.at("seed").get<std::uint64_t>() == 31);
  CHECK(rj.at("points").size() == 4);
  CHECK(rj.at("points").at(0).size() == 8);
  REQUIRE(rj.at("checks").size() == 3);
  CHECK(rj.at("checks").at(1).at("name").get<std::string>() ==
        "quaternionicity_witness");
  CHECK(rj.at("checks").at(1).at("verdict").get<std::string>() == "pass");
  CHECK(rj.at("checks").at(1).at("satisfied").get<bool>());
  CHECK(rj.at("checks").at(1).at("max_residual").get<double>() <= 1e-12);
  CHECK(rj.at("checks").at(0).at("items").size() >= 1);
  CHECK(rj.at("satisfied").get<bool>());

  pq::Scenario reseeded = s;
  reseeded.seed = 77;
  const pq::ScenarioRun other = pq::run_scenario(reseeded, 1);
  REQUIRE(other.points.size() == 4);
  CHECK(other.points[0].v != serial.points[0].v);

  CHECK_THROWS_WITH_AS(pq::run_scenario(s, 0), "jobs must be >= 1", pq::Error);
}

TEST_CASE("expected failures: the diagonal family flips the witness expectation") {
  const char* text = R"({
    "structure": {"generator": "propo", "m": 2, "h": "const1"},
    "samples": {"box": {"lo": 0.6, "hi": 1.4, "count": 4}},
    "tolerance": 1e-8,
    "seed": 5,
    "checks": [
      {"name": "quaternionicity_witness", "expect": "fail"},
      {"name": "pde_residual", "tol": 1e-10}
    ]
  })";
  const pq::Scenario s = pq::scenario_from_json(text);
  const pq::ScenarioRun run = pq::run_scenario(s, 2);
  CHECK(run.structure_label == "propo m=2 h=const1");
  CHECK(run.points.size() >= 1);
  REQUIRE(run.entries.size() == 2);
  CHECK_FALSE(run.entries[0].report.pass());
  CHECK(run.entries[0].report.max_residual() >= 1e-3);
  CHECK(run.entries[0].satisfied);
  CHECK(run.entries[1].report.pass());
  CHECK(run.entries[1].report.classification == "diagonal family");
  CHECK(run.entries[1].satisfied);
  CHECK(run.all_satisfied());
  CHECK_FALSE(run.errored());

  pq::Scenario strict = s;
  strict.checks[0].expect_fail = false;
  const pq::ScenarioRun failing = pq::run_scenario(strict, 1);
  CHECK_FALSE(failing.entries[0].satisfied);
  CHECK_FALSE(failing.all_satisfied());
  CHECK_FALSE(failing.errored());
  const std::string report = pq::report_json(strict, failing);
  CHECK(report.find("\"satisfied\": false") != std::string::npos);
}

TEST_CASE("structure files and explicit samples feed the runner") {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string spath = (dir / "pq_scenario_flat.json").string();
  pq::save_structure(pq::flat_model(2), spath);

  pq::Scenario s;
  s.structure.generator = "file";
  s.structure.path = spath;
  s.samples.points = {{0.1, -0.2, 0.3, 0.4, -0.1, 0.2, 0.5, -0.3},
                      {-0.5, 0.2, 0.0, 0.7, 0.3, -0.4, 0.1, 0.6}};
  s.seed = 9;
  pq::CheckSpec basis;
  basis.name = "admissible_basis";
  pq::CheckSpec section;
  section.name = "is_integrable";
  section.section = {0.0, 1.0, 0.0};
  s.checks = {basis, section};

  const pq::ScenarioRun run = pq::run_scenario(s);
  CHECK(run.structure_label == "file " + spath);
  CHECK(run.points.size() == 2);
  CHECK(run.all_satisfied());

  pq::Scenario bad = s;
  bad.samples.points = {{0.1, 0.2}};
  CHECK_THROWS_WITH_AS(pq::run_scenario(bad),
                       "explicit sample 0 has dimension 2, the chart needs 8",
                       pq::Error);

  pq::Scenario missing = s;
  missing.structure.path = (dir / "pq_scenario_missing.json").string();
  CHECK_THROWS_AS(pq::run_scenario(missing), pq::Error);
  std::filesystem::remove(spath);
}

TEST_CASE("fiber checks run through the dispatch table") {
  const char* text = R"({
    "structure": {"generator": "flat", "m": 2},
    "samples": {"box": {"lo": -0.6, "hi": 0.6, "count": 2}},
    "tolerance": 1e-8,
    "seed": 13,
    "checks": [
      {"name": "twistor_nijenhuis", "eps": -1, "fibers": 1, "pairs": 4, "tol": 1e-6},
      {"name": "minimal_independence", "eps": 1},
      {"name": "tautological_section", "section": [0.0, 1.0, 0.0]}
    ]
  })";
  const pq::Scenario s = pq::scenario_from_json(text);
  const pq::ScenarioRun run = pq::run_scenario(s, 2);
  REQUIRE(run.entries.size() == 3);
  for (const auto& e : run.entries) {
    CHECK(e.error.empty());
    CHECK(e.satisfied);
  }
  const auto& twist = run.entries[0].report;
  CHECK(twist.classification == "integrable");
  CHECK(twist.find("sample 0 fiber 0 twistor nijenhuis") != nullptr);
  CHECK(twist.find("sample 1 fiber 0 structure square") != nullptr);
  const auto& indep = run.entries[1].report;
  CHECK(indep.classification == "well defined");
  CHECK(indep.find("sample 0 minimal family max") != nullptr);
  const auto& taut = run.entries[2].report;
  CHECK(taut.classification == "stable integrable section");
}

TEST_CASE("atomic report writes and error capture") {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string rpath = (dir / "pq_scenario_report.json").string();
  pq::write_text_atomic(rpath, "hello\n");
  {
    std::ifstream in(rpath);
    std::string line;
    std::getline(in, line);
    CHECK(line == "hello");
  }
  CHECK_FALSE(std::filesystem::exists(rpath + ".tmp"));
  pq::write_text_atomic(rpath, "bye\n");
  {
    std::ifstream in(rpath);
    std::string line;
    std::getline(in, line);
    CHECK(line == "bye");
  }
  std::filesystem::remove(rpath);
  CHECK_THROWS_WITH_AS(
      pq::write_text_atomic("/pq_no_such_dir/report.json", "x"),
      doctest::Contains("cannot write"), pq::Error);

  // A structure file whose first basis field is tampered: the span is no
  // longer preserved by any connection, so fiber checks throw and the entry
  // records the message instead of a verdict.
  const std::string bad_path = (dir / "pq_scenario_tampered.json").string();
  nlohmann::json sj = nlohmann::json::parse(pq::structure_to_json(pq::flat_model(2)));
  sj["J1"][0][0] = "x1";
  pq::write_text_atomic(bad_path, sj.dump());

  pq::Scenario s;
  s.structure.generator = "file";
  s.structure.path = bad_path;
  s.samples.points = {{0.1, 0.2, -0.3, 0.4, 0.5, -0.2, 0.3, -0.1}};
  s.seed = 3;
  pq::CheckSpec c;
  c.name = "twistor_nijenhuis";
  c.eps = -1;
  c.fibers = 1;
  c.pairs = 2;
  s.checks = {c};
  const pq::ScenarioRun run = pq::run_scenario(s);
  REQUIRE(run.entries.size() == 1);
  CHECK(run.errored());
  CHECK_FALSE(run.entries[0].satisfied);
  CHECK_FALSE(run.entries[0].error.empty());
  CHECK_FALSE(run.all_satisfied());
  const std::string report = pq::report_json(s, run);
  CHECK(report.find("\"error\"") != std::string::npos);
  std::filesystem::remove(bad_path);
}
