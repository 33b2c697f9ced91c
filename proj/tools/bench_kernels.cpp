// Times the parallel kernels against their serial reference path on fixed
// workloads and verifies that both produce identical reports. Exits nonzero
// on any disagreement so the comparison can run in CI.
#include <pq/integrability.hpp>
#include <pq/parallel.hpp>
#include <pq/twistor.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace {

using Clock = std::chrono::steady_clock;

double run_ms(const std::function<pq::IntegrabilityReport()>& work,
              pq::IntegrabilityReport& out, int repeat) {
  const auto start = Clock::now();
  for (int r = 0; r < repeat; ++r) out = work();
  const auto stop = Clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count() / repeat;
}

bool identical(const pq::IntegrabilityReport& a, const pq::IntegrabilityReport& b) {
  if (a.checks.size() != b.checks.size()) return false;
  for (std::size_t i = 0; i < a.checks.size(); ++i)
    if (a.checks[i].name != b.checks[i].name ||
        a.checks[i].residual != b.checks[i].residual ||
        a.checks[i].note != b.checks[i].note)
      return false;
  return a.classification == b.classification;
}

}  // namespace

int main(int argc, char** argv) {
  int repeat = 3;
  if (argc > 1) repeat = std::max(1, std::atoi(argv[1]));

  pq::PqStructure P = pq::propo_structure(2, "const1");
  const auto pts = pq::propo_admissible_samples(
      2, "const1", pq::sample_box(P.chart, 0.4, 1.6, 24, 11));
  if (pts.size() < 8) {
    std::fprintf(stderr, "not enough admissible sample points\n");
    return 1;
  }
  pq::PqStructure F = pq::flat_model(2);
  const auto flat_pts = pq::sample_box(F.chart, -0.6, 0.6, 12, 9);

  struct Kernel {
    std::string name;
    std::function<pq::IntegrabilityReport()> work;
  };
  std::vector<Kernel> kernels;
  kernels.push_back({"twistor stencil (8 base solves x 2)", [&] {
                       const pq::FiberPoint fp = pq::fiber_sample(1, pts[0], 1)[0];
                       return pq::twistor_nijenhuis(P, 1, fp, 8, 1e-7);
                     }});
  kernels.push_back({"span torsion sweep (24 samples)",
                     [&] { return pq::quaternionicity_witness(P, pts, 1e-8); }});
  kernels.push_back({"section stability sweep (12 samples)", [&] {
                       return pq::tautological_section_check(
                           F, pq::CompatibleStructure::constant(0.0, 1.0, 0.0),
                           flat_pts, 1e-8);
                     }});

  std::printf("workers available: %d\n\n", pq::par::worker_count());
  std::printf("%-38s %12s %12s %9s %s\n", "kernel", "serial ms", "parallel ms",
              "speedup", "agree");

  bool all_agree = true;
  for (const Kernel& k : kernels) {
    pq::IntegrabilityReport serial_rep, parallel_rep;
    pq::par::force_serial(true);
    const double serial_ms = run_ms(k.work, serial_rep, repeat);
    pq::par::force_serial(false);
    const double parallel_ms = run_ms(k.work, parallel_rep, repeat);
    const bool agree = identical(serial_rep, parallel_rep);
    all_agree = all_agree && agree;
    std::printf("%-38s %12.2f %12.2f %8.2fx %s\n", k.name.c_str(), serial_ms,
                parallel_ms, serial_ms / parallel_ms, agree ? "yes" : "NO");
  }
  if (!all_agree) {
    std::fprintf(stderr, "\nserial and parallel reports disagree\n");
    return 1;
  }
  return 0;
}
