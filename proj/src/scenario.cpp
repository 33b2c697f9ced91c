// Scenario execution: JSON parsing with strict key checking, the check
// dispatch table, a thread pool over the check list, and byte-stable report
// serialization.
#include "pq/scenario.hpp"

#include "pq/twistor.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>
#include <utility>

namespace pq {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& msg) { throw Error(msg); }

const std::vector<std::string> kGenerators = {
    "flat", "propo", "pullback_flat", "conjugated_flat", "rotated_flat", "file"};

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

void expect_keys(const json& j, const std::vector<std::string>& allowed,
                 const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!contains(allowed, it.key())) {
      fail("unknown " + where + " key \"" + it.key() + "\"");
    }
  }
}

double number_at(const json& j, const std::string& key, const std::string& where) {
  if (!j.at(key).is_number()) fail(where + " key \"" + key + "\" must be a number");
  return j.at(key).get<double>();
}

// Option keys a check accepts beyond name/expect/tol.
struct CheckTraits {
  bool eps = false;
  bool fibers = false;
  bool pairs = false;
  bool section = false;
};

CheckTraits check_traits(const std::string& name) {
  CheckTraits t;
  if (name == "twistor_nijenhuis") t.eps = t.fibers = t.pairs = true;
  if (name == "minimal_independence") t.eps = true;
  if (name == "is_integrable" || name == "tautological_section") t.section = true;
  return t;
}

void validate_section(const std::array<double, 3>& a) {
  const double q = -a[0] * a[0] + a[1] * a[1] + a[2] * a[2];
  if (std::abs(q - 1.0) > 1e-9 && std::abs(q + 1.0) > 1e-9) {
    fail("check section must satisfy -a1^2 + a2^2 + a3^2 = +-1");
  }
}

// Structure-independent validation, shared by the parser and run_scenario so
// hand-built scenarios get the same screening.
void validate_scenario(const Scenario& s) {
  const StructureSpec& st = s.structure;
  if (!contains(kGenerators, st.generator)) {
    fail("unknown generator \"" + st.generator + "\"");
  }
  if (st.generator == "file") {
    if (st.path.empty()) fail("file generator needs a nonempty path");
  } else if (st.m < 2) {
    fail("generator needs m >= 2");
  }
  if (st.generator == "propo" && !function_registered(st.h)) {
    fail("unknown slope function \"" + st.h + "\"");
  }
  if (s.samples.box) {
    if (!(s.samples.lo < s.samples.hi)) fail("sample box needs lo < hi");
    if (s.samples.count < 1) fail("sample box needs count >= 1");
  }
  if (s.samples.points.empty() && !s.samples.box) fail("no sample points");
  if (!(s.tolerance > 0.0)) fail("tolerance must be positive");
  if (s.checks.empty()) fail("empty check list");
  for (const CheckSpec& c : s.checks) {
    if (!contains(scenario_check_names(), c.name)) {
      fail("unknown check \"" + c.name + "\"");
    }
    if (c.tol && !(*c.tol > 0.0)) fail("tolerance must be positive");
    if (c.eps != 1 && c.eps != -1) fail("check eps must be +-1");
    if (c.fibers < 1) fail("check fibers must be >= 1");
    if (c.pairs < 1) fail("check pairs must be >= 1");
    const CheckTraits t = check_traits(c.name);
    if (t.section) validate_section(c.section);
    if (c.name == "pde_residual" && st.generator != "propo") {
      fail("check pde_residual needs the propo generator");
    }
  }
}

CheckSpec parse_check(const json& j) {
  CheckSpec c;
  if (j.is_string()) {
    c.name = j.get<std::string>();
    return c;
  }
  if (!j.is_object()) fail("check entries must be names or objects");
  if (!j.contains("name")) fail("check object needs a name");
  c.name = j.at("name").get<std::string>();
  const CheckTraits t = check_traits(c.name);
  std::vector<std::string> allowed = {"name", "expect", "tol"};
  if (t.eps) allowed.push_back("eps");
  if (t.fibers) allowed.push_back("fibers");
  if (t.pairs) allowed.push_back("pairs");
  if (t.section) allowed.push_back("section");
  expect_keys(j, allowed, "check \"" + c.name + "\"");
  if (j.contains("expect")) {
    const std::string e = j.at("expect").get<std::string>();
    if (e != "pass" && e != "fail") fail("check expect must be \"pass\" or \"fail\"");
    c.expect_fail = e == "fail";
  }
  if (j.contains("tol")) c.tol = number_at(j, "tol", "check");
  if (j.contains("eps")) c.eps = j.at("eps").get<int>();
  if (j.contains("fibers")) c.fibers = j.at("fibers").get<int>();
  if (j.contains("pairs")) c.pairs = j.at("pairs").get<int>();
  if (j.contains("section")) {
    const json& sec = j.at("section");
    if (!sec.is_array() || sec.size() != 3) fail("check section must have 3 entries");
    for (int i = 0; i < 3; ++i) c.section[i] = sec.at(i).get<double>();
  }
  return c;
}

ordered_json check_result_json(const CheckResult& r) {
  ordered_json item;
  item["name"] = r.name;
  item["residual"] = r.residual;
  item["tol"] = r.tol;
  item["verdict"] = to_string(r.verdict);
  if (!r.note.empty()) item["note"] = r.note;
  return item;
}

// Deterministic covector draws for the independence check.
std::vector<OneForm> independence_alphas(const Chart& chart, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x5ca1ab1eULL);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<OneForm> alphas;
  alphas.push_back(OneForm::zero(chart));
  for (int draw = 0; draw < 2; ++draw) {
    Eigen::VectorXd v(chart.dim());
    for (int i = 0; i < chart.dim(); ++i) v(i) = u(rng);
    alphas.push_back(OneForm::constant(chart, v));
  }
  return alphas;
}

void add_prefixed(IntegrabilityReport& rep, const IntegrabilityReport& sub,
                  const std::string& prefix) {
  for (const CheckResult& r : sub.checks) {
    CheckResult copy = r;
    copy.name = prefix + r.name;
    rep.add(std::move(copy));
  }
}

IntegrabilityReport run_check(const PqStructure& H, const std::vector<Point>& pts,
                              const CheckSpec& c, double tol, std::uint64_t seed,
                              const StructureSpec& src) {
  if (c.name == "quaternionicity_witness") return quaternionicity_witness(H, pts, tol);
  if (c.name == "proof_identity_suite") return proof_identity_suite(H, pts, tol);
  if (c.name == "lemma_pe_check") return lemma_pe_check(H, pts, tol);
  if (c.name == "is_integrable") {
    const auto A =
        CompatibleStructure::constant(c.section[0], c.section[1], c.section[2]);
    return is_integrable(H, A, pts, tol);
  }
  if (c.name == "tautological_section") {
    const auto A =
        CompatibleStructure::constant(c.section[0], c.section[1], c.section[2]);
    return tautological_section_check(H, A, pts, tol);
  }
  if (c.name == "admissible_basis") {
    const BasisCheck bc = admissible_basis_check(H, pts, tol);
    IntegrabilityReport rep;
    rep.samples = pts;
    for (const BasisCheck::Item& item : bc.items) {
      rep.add(make_check(item.invariant, item.residual, bc.tol,
                         "worst at sample " + std::to_string(item.sample)));
    }
    return rep;
  }
  if (c.name == "pde_residual") {
    const auto f = diagonal_matrix(propo_f(src.m, src.h));
    IntegrabilityReport rep;
    rep.samples = pts;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      rep.add(make_check("pde sample " + std::to_string(k),
                         pde_residual(H.chart, f, pts[k]), tol));
    }
    rep.classification = "diagonal family";
    return rep;
  }
  if (c.name == "twistor_nijenhuis") {
    IntegrabilityReport rep;
    rep.samples = pts;
    bool integrable = true;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const auto fps = fiber_sample(c.eps, pts[k], c.fibers, seed);
      for (std::size_t j = 0; j < fps.size(); ++j) {
        const auto sub = twistor_nijenhuis(H, c.eps, fps[j], c.pairs, tol);
        add_prefixed(rep, sub,
                     "sample " + std::to_string(k) + " fiber " + std::to_string(j) + " ");
        integrable = integrable && sub.classification == "integrable";
      }
    }
    rep.classification = integrable ? "integrable" : "not integrable";
    return rep;
  }
  if (c.name == "minimal_independence") {
    const auto alphas = independence_alphas(H.chart, seed);
    IntegrabilityReport rep;
    rep.samples = pts;
    bool well_defined = true;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const FiberPoint fp = fiber_sample(c.eps, pts[k], 1, seed).at(0);
      const auto sub = minimal_independence(H, fp, c.eps, alphas, tol);
      add_prefixed(rep, sub, "sample " + std::to_string(k) + " ");
      well_defined = well_defined && sub.classification == "well defined";
    }
    rep.classification = well_defined ? "well defined" : "connection dependent";
    return rep;
  }
  fail("unknown check \"" + c.name + "\"");
}

}  // namespace

std::string StructureSpec::label() const {
  if (generator == "file") return "file " + path;
  std::ostringstream os;
  os << generator << " m=" << m;
  if (generator == "propo") os << " h=" << h;
  if (generator == "pullback_flat" || generator == "conjugated_flat" ||
      generator == "rotated_flat") {
    os << " seed=" << seed;
  }
  return os.str();
}

const std::vector<std::string>& scenario_check_names() {
  static const std::vector<std::string> names = {
      "admissible_basis",        "is_integrable",  "tautological_section",
      "quaternionicity_witness", "proof_identity_suite", "lemma_pe_check",
      "pde_residual",            "twistor_nijenhuis",    "minimal_independence"};
  return names;
}

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("scenario parse: ") + e.what());
  }
  if (!j.is_object()) fail("scenario must be a JSON object");
  expect_keys(j, {"schema", "structure", "samples", "tolerance", "seed", "checks", "out"},
              "scenario");
  if (j.contains("schema") && j.at("schema").get<std::string>() != kScenarioSchema) {
    fail("unsupported scenario schema \"" + j.at("schema").get<std::string>() + "\"");
  }

  Scenario s;
  if (j.contains("structure")) {
    const json& st = j.at("structure");
    expect_keys(st, {"generator", "m", "seed", "h", "path"}, "structure");
    if (st.contains("generator")) s.structure.generator = st.at("generator").get<std::string>();
    if (st.contains("m")) s.structure.m = st.at("m").get<int>();
    if (st.contains("seed")) s.structure.seed = st.at("seed").get<std::uint64_t>();
    if (st.contains("h")) s.structure.h = st.at("h").get<std::string>();
    if (st.contains("path")) s.structure.path = st.at("path").get<std::string>();
  }
  if (j.contains("samples")) {
    const json& sp = j.at("samples");
    expect_keys(sp, {"points", "box"}, "samples");
    if (sp.contains("points")) {
      for (const json& row : sp.at("points")) {
        s.samples.points.push_back(row.get<std::vector<double>>());
      }
    }
    if (sp.contains("box")) {
      const json& box = sp.at("box");
      expect_keys(box, {"lo", "hi", "count"}, "box");
      s.samples.box = true;
      s.samples.lo = number_at(box, "lo", "box");
      s.samples.hi = number_at(box, "hi", "box");
      s.samples.count = box.at("count").get<int>();
    }
  }
  if (j.contains("tolerance")) s.tolerance = number_at(j, "tolerance", "scenario");
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("checks")) {
    for (const json& entry : j.at("checks")) s.checks.push_back(parse_check(entry));
  }
  if (j.contains("out")) s.out = j.at("out").get<std::string>();

  validate_scenario(s);
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot read scenario file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return scenario_from_json(buf.str());
}

PqStructure scenario_structure(const StructureSpec& spec) {
  if (spec.generator == "flat") return flat_model(spec.m);
  if (spec.generator == "propo") return propo_structure(spec.m, spec.h);
  if (spec.generator == "pullback_flat") return pullback_flat_structure(spec.m, spec.seed);
  if (spec.generator == "conjugated_flat") {
    return conjugated_flat_structure(spec.m, spec.seed);
  }
  if (spec.generator == "rotated_flat") {
    return rotated_admissible_basis(flat_model(spec.m), spec.seed);
  }
  if (spec.generator == "file") return load_structure(spec.path);
  fail("unknown generator \"" + spec.generator + "\"");
}

bool ScenarioRun::all_satisfied() const {
  return std::all_of(entries.begin(), entries.end(),
                     [](const Entry& e) { return e.satisfied; });
}

bool ScenarioRun::errored() const {
  return std::any_of(entries.begin(), entries.end(),
                     [](const Entry& e) { return !e.error.empty(); });
}

ScenarioRun run_scenario(const Scenario& s, int jobs) {
  if (jobs < 1) fail("jobs must be >= 1");
  validate_scenario(s);

  const PqStructure H = scenario_structure(s.structure);
  const int n = H.chart.dim();

  std::vector<Point> pts;
  for (std::size_t k = 0; k < s.samples.points.size(); ++k) {
    const auto& row = s.samples.points[k];
    if (static_cast<int>(row.size()) != n) {
      fail("explicit sample " + std::to_string(k) + " has dimension " +
           std::to_string(row.size()) + ", the chart needs " + std::to_string(n));
    }
    pts.push_back(H.chart.point(row));
  }
  if (s.structure.generator == "propo" && !pts.empty()) {
    const auto kept = propo_admissible_samples(s.structure.m, s.structure.h, pts);
    if (kept.size() != pts.size()) {
      fail("explicit sample inside the singular margin of the diagonal family");
    }
  }
  if (s.samples.box) {
    auto drawn = sample_box(H.chart, s.samples.lo, s.samples.hi, s.samples.count, s.seed);
    if (s.structure.generator == "propo") {
      drawn = propo_admissible_samples(s.structure.m, s.structure.h, drawn);
    }
    pts.insert(pts.end(), drawn.begin(), drawn.end());
  }
  if (pts.empty()) fail("no admissible sample points");

  ScenarioRun run;
  run.structure_label = s.structure.label();
  run.points = pts;
  run.entries.resize(s.checks.size());
  for (std::size_t i = 0; i < s.checks.size(); ++i) run.entries[i].spec = s.checks[i];

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < run.entries.size();
         i = next.fetch_add(1)) {
      ScenarioRun::Entry& e = run.entries[i];
      const double tol = e.spec.tol.value_or(s.tolerance);
      try {
        e.report = run_check(H, pts, e.spec, tol, s.seed, s.structure);
        const bool pass = e.report.pass();
        e.satisfied = e.spec.expect_fail ? !pass : pass;
      } catch (const std::exception& ex) {
        e.error = ex.what();
        e.satisfied = false;
      }
    }
  };
  const int workers =
      std::max(1, std::min<int>(jobs, static_cast<int>(run.entries.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  return run;
}

std::string report_json(const Scenario& s, const ScenarioRun& run,
                        const std::string& timestamp) {
  ordered_json j;
  j["schema"] = kReportSchema;
  j["toolkit"] = ordered_json{{"name", "pq"}, {"version", kToolkitVersion}};
  if (!timestamp.empty()) j["generated"] = timestamp;
  j["structure"] = run.structure_label;
  j["seed"] = s.seed;
  j["tolerance"] = s.tolerance;
  ordered_json pts = ordered_json::array();
  for (const Point& p : run.points) pts.push_back(p.v);
  j["points"] = std::move(pts);

  ordered_json checks = ordered_json::array();
  for (const ScenarioRun::Entry& e : run.entries) {
    ordered_json entry;
    entry["name"] = e.spec.name;
    entry["expect"] = e.spec.expect_fail ? "fail" : "pass";
    entry["tol"] = e.spec.tol.value_or(s.tolerance);
    if (!e.error.empty()) {
      entry["error"] = e.error;
      entry["satisfied"] = false;
      checks.push_back(std::move(entry));
      continue;
    }
    entry["verdict"] = to_string(e.report.verdict);
    entry["satisfied"] = e.satisfied;
    if (!e.report.classification.empty()) {
      entry["classification"] = e.report.classification;
    }
    entry["max_residual"] = e.report.max_residual();
    ordered_json items = ordered_json::array();
    for (const CheckResult& r : e.report.checks) items.push_back(check_result_json(r));
    entry["items"] = std::move(items);
    checks.push_back(std::move(entry));
  }
  j["checks"] = std::move(checks);
  j["satisfied"] = run.all_satisfied();
  return j.dump(2) + "\n";
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail("cannot write " + tmp);
    out << text;
    out.flush();
    if (!out) fail("cannot write " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    fail("cannot move report into place at " + path);
  }
}

}  // namespace pq
