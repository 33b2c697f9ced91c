// Scenario runner: a JSON description names a structure source, a sample
// plan, tolerances and a list of checks; the runner executes the checks on
// a worker pool and serializes one report holding every residual, so a
// verdict can be audited without rerunning the computation.
#ifndef PQ_SCENARIO_HPP
#define PQ_SCENARIO_HPP

#include "integrability.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pq {

inline constexpr const char* kScenarioSchema = "pq-scenario/1";
inline constexpr const char* kReportSchema = "pq-report/1";
inline constexpr const char* kToolkitVersion = "1.0.0";

// Structure source: a generator from the menu or a structure file.
struct StructureSpec {
  std::string generator = "flat";  // flat | propo | pullback_flat |
                                   // conjugated_flat | rotated_flat | file
  int m = 2;
  std::uint64_t seed = 1;  // seeded generators only
  std::string h = "const1";  // slope function of the diagonal family
  std::string path;          // file source

  std::string label() const;
};

// Sample plan: explicit coordinates and/or a seeded box draw. The diagonal
// family additionally filters the plan through its admissible margin; a
// dropped explicit point is an error, a thinned box draw is not.
struct SamplePlan {
  std::vector<std::vector<double>> points;
  bool box = false;
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
};

struct CheckSpec {
  std::string name;
  bool expect_fail = false;   // the scenario expects this check to fail
  std::optional<double> tol;  // overrides the scenario tolerance
  int eps = -1;               // fiber quadric sign (twistor checks)
  int fibers = 2;             // fiber points per base sample
  int pairs = 8;              // tangent pairs per fiber stencil
  std::array<double, 3> section{0.0, 1.0, 0.0};  // constant-section checks
};

struct Scenario {
  StructureSpec structure;
  SamplePlan samples;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  std::vector<CheckSpec> checks;
  std::string out;  // default report path, overridable on the command line
};

// Names accepted in the checks list.
const std::vector<std::string>& scenario_check_names();

// Parse and statically validate; throws Error naming the offending key,
// check or bound. Validation that needs the structure itself (file loading,
// sample dimensions, admissible margins) runs when the scenario prepares,
// still before any check computes.
Scenario scenario_from_json(const std::string& text);
Scenario load_scenario(const std::string& path);

// Builds the structure a spec names; throws Error for unknown generators or
// unreadable files.
PqStructure scenario_structure(const StructureSpec& spec);

struct ScenarioRun {
  struct Entry {
    CheckSpec spec;
    IntegrabilityReport report;
    bool satisfied = false;  // verdict matches the expectation
    std::string error;       // nonempty when the check threw
  };
  std::string structure_label;
  std::vector<Point> points;
  std::vector<Entry> entries;

  bool all_satisfied() const;
  bool errored() const;
};

// Prepares structure and samples, then runs the checks on `jobs` workers.
// Entries keep the scenario order regardless of the pool size. A throwing
// check records its message and never satisfies, even under expect-fail.
ScenarioRun run_scenario(const Scenario& s, int jobs = 1);

// Report serialization: stable key order and shortest round-trip numerals,
// so identical runs serialize to identical bytes. A nonempty timestamp is
// the only line that may differ between reruns; empty omits the field.
std::string report_json(const Scenario& s, const ScenarioRun& run,
                        const std::string& timestamp = {});

// Writes via a sibling temp file and rename, so readers never observe a
// partial report.
void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace pq

#endif
