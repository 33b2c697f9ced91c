#include "pq/twistor.hpp"

#include "pq/parallel.hpp"
#include "pq/tensorcalc.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace pq {

namespace {

constexpr std::uint64_t kPairSeed = 0x3a0du;
constexpr int kBasePairCount = 16;   // pairs for the torsion hypothesis
constexpr double kQuadricTol = 1e-10;
constexpr double kVerticalTol = 1e-8;
constexpr double kSeamBand = 1e-4;   // |r2^2+r3^2-1| exclusion around the waist
constexpr double kPivotFloor = 1e-3;
constexpr double kSheetFloor = 1e-12;  // lift radicand floor
constexpr double kStep = 1e-4;
constexpr double kSquareTol = 1e-10;
constexpr double kTraceTol = 1e-9;
constexpr std::array<double, 3> kEta{-1.0, 1.0, 1.0};

int check_eps(int eps) {
  if (eps != 1 && eps != -1) throw Error("quadric sign must be +-1");
  return eps;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

using TangentPairs = std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>;

double pair_residual(const TwoFormValue& D, const TangentPairs& pairs) {
  double worst = 0.0;
  for (const auto& [X, Y] : pairs)
    worst = std::max(worst, D.value(X, Y).cwiseAbs().maxCoeff());
  return worst;
}

bool same_point(const Point& a, const Point& b) {
  if (a.v.size() != b.v.size()) return false;
  for (std::size_t i = 0; i < a.v.size(); ++i)
    if (a.v[i] != b.v[i]) return false;
  return true;
}

}  // namespace

double FiberPoint::quadric_residual(int eps) const {
  check_eps(eps);
  return std::abs(lorentz_dot(r, r) - static_cast<double>(eps));
}

Eigen::MatrixXd FiberPoint::matrix(const PqStructure& H) const {
  const int n = H.chart.dim();
  if (p.dim() != n) throw Error("fiber point chart dimension mismatch");
  EvalCache cache(p);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < 3; ++i) A += r(i) * H.J[i].eval(cache);
  return A;
}

std::vector<FiberPoint> fiber_sample(int eps, const Point& p, int count,
                                     std::uint64_t seed) {
  check_eps(eps);
  if (count < 1) throw Error("fiber_sample needs count >= 1");
  std::mt19937_64 rng(seed ^ (eps > 0 ? 0x9e3779b97f4a7c15ull : 0x2545f4914f6cdd1dull));
  std::uniform_real_distribution<double> radial(0.2, 1.2);
  std::uniform_real_distribution<double> angular(0.0, 2.0 * M_PI);
  std::vector<FiberPoint> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double t = radial(rng);
    const double phi = angular(rng);
    const double side = (k % 2 == 0) ? 1.0 : -1.0;
    Eigen::Vector3d r;
    if (eps < 0)
      r = {side * std::cosh(t), std::sinh(t) * std::cos(phi),
           std::sinh(t) * std::sin(phi)};
    else
      r = {side * std::sinh(t), std::cosh(t) * std::cos(phi),
           std::cosh(t) * std::sin(phi)};
    out.push_back({p, r});
  }
  return out;
}

TotalTangent twistor_J(const PqStructure& H, const ConnectionJet& c,
                       const FiberPoint& fp, int eps, const TotalTangent& v) {
  check_eps(eps);
  const int n = H.chart.dim();
  if (c.dim() != n || fp.p.dim() != n || v.h.size() != n)
    throw Error("twistor_J: chart dimension mismatch");
  if (!same_point(c.p, fp.p)) throw Error("jet based at a different point");
  if (c.span_residual() > 1e-6)
    throw Error("connection does not preserve the structure span");
  if (fp.quadric_residual(eps) > kQuadricTol)
    throw Error("fiber point off the quadric");
  if (std::abs(lorentz_dot(fp.r, v.vert)) > kVerticalTol * std::max(1.0, v.vert.norm()))
    throw Error("vertical part off the quadric tangent plane");
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < 3; ++i) A += fp.r(i) * c.jets.J[i];
  return {A * v.h, lorentz_cross(fp.r, v.vert)};
}

FiberChart FiberChart::select(int eps, const Eigen::Vector3d& r) {
  check_eps(eps);
  if (eps < 0) return pivoted(eps, r, 0);
  const double seam = std::abs(r(1) * r(1) + r(2) * r(2) - 1.0);
  if (seam >= kSeamBand) return pivoted(eps, r, 0);
  return pivoted(eps, r, std::abs(r(1)) >= std::abs(r(2)) ? 1 : 2);
}

FiberChart FiberChart::pivoted(int eps, const Eigen::Vector3d& r, int pivot) {
  check_eps(eps);
  if (pivot < 0 || pivot > 2) throw Error("fiber chart pivot out of range");
  if (std::abs(r(pivot)) < kPivotFloor)
    throw Error("fiber chart pivot coefficient too small");
  FiberChart ch;
  ch.eps = eps;
  ch.pivot = pivot;
  ch.sign = r(pivot) >= 0.0 ? 1 : -1;
  return ch;
}

std::array<int, 2> FiberChart::params() const {
  switch (pivot) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    default: return {0, 1};
  }
}

Eigen::Vector3d FiberChart::lift(const Eigen::Vector2d& u) const {
  const auto pr = params();
  const double rad = kEta[static_cast<std::size_t>(pivot)] *
                     (eps - kEta[static_cast<std::size_t>(pr[0])] * u(0) * u(0) -
                      kEta[static_cast<std::size_t>(pr[1])] * u(1) * u(1));
  if (rad < kSheetFloor) throw Error("quadric chart leaves the sheet");
  Eigen::Vector3d r;
  r(pr[0]) = u(0);
  r(pr[1]) = u(1);
  r(pivot) = sign * std::sqrt(rad);
  return r;
}

Eigen::Vector2d FiberChart::project(const Eigen::Vector3d& r) const {
  const auto pr = params();
  return {r(pr[0]), r(pr[1])};
}

Eigen::Matrix<double, 3, 2> FiberChart::jacobian(const Eigen::Vector3d& r) const {
  const auto pr = params();
  if (std::abs(r(pivot)) < kPivotFloor)
    throw Error("fiber chart pivot coefficient too small");
  Eigen::Matrix<double, 3, 2> D = Eigen::Matrix<double, 3, 2>::Zero();
  for (int j = 0; j < 2; ++j) {
    D(pr[j], j) = 1.0;
    D(pivot, j) = -kEta[static_cast<std::size_t>(pivot)] *
                  kEta[static_cast<std::size_t>(pr[j])] * r(pr[j]) / r(pivot);
  }
  return D;
}

Eigen::MatrixXd total_matrix(const PqStructure& H, const ConnectionJet& c,
                             const FiberPoint& fp, int eps,
                             const FiberChart& chart) {
  check_eps(eps);
  const int n = H.chart.dim();
  if (c.dim() != n || fp.p.dim() != n)
    throw Error("total_matrix: chart dimension mismatch");
  if (chart.eps != eps) throw Error("fiber chart sign mismatch");
  if (!same_point(c.p, fp.p)) throw Error("jet based at a different point");
  if (fp.quadric_residual(eps) > kQuadricTol)
    throw Error("fiber point off the quadric");
  const Eigen::Vector3d r = fp.r;
  if ((chart.lift(chart.project(r)) - r).cwiseAbs().maxCoeff() > 1e-9)
    throw Error("fiber point not on the chart sheet");

  const FiberConnectionForm w = fiber_form(c, H);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < 3; ++i) A += r(i) * c.jets.J[i];
  const auto pr = chart.params();
  const Eigen::Matrix<double, 3, 2> D = chart.jacobian(r);

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + 2, n + 2);
  M.topLeftCorner(n, n) = A;
  // Base direction k carries the vertical drift omega_k r; the image has
  // vertical part cross(r, omega_k r) and chart fiber velocity obtained by
  // removing the drift of the image base direction A e_k.
  for (int k = 0; k < n; ++k) {
    Eigen::Vector3d dot = lorentz_cross(r, w.omega[static_cast<std::size_t>(k)] * r);
    for (int l = 0; l < n; ++l)
      dot -= A(l, k) * (w.omega[static_cast<std::size_t>(l)] * r);
    M(n + 0, k) = dot(pr[0]);
    M(n + 1, k) = dot(pr[1]);
  }
  for (int j = 0; j < 2; ++j) {
    const Eigen::Vector3d dot = lorentz_cross(r, D.col(j));
    M(n + 0, n + j) = dot(pr[0]);
    M(n + 1, n + j) = dot(pr[1]);
  }
  return M;
}

IntegrabilityReport twistor_nijenhuis(const PqStructure& H, int eps,
                                      const FiberPoint& fp, int pairs,
                                      double tol) {
  check_eps(eps);
  if (pairs < 1) throw Error("twistor_nijenhuis needs at least one tangent pair");
  if (tol <= 0.0) throw Error("tolerance must be positive");
  const int n = H.chart.dim();
  if (fp.p.dim() != n) throw Error("fiber point chart dimension mismatch");
  if (fp.quadric_residual(eps) > kQuadricTol)
    throw Error("fiber point off the quadric");
  const int N = n + 2;

  IntegrabilityReport rep;
  rep.samples = {fp.p};

  const OneForm zero = OneForm::zero(H.chart);
  const ConnectionJet jet0 = minimal(H, fp.p, zero);

  auto matrix_at = [&](const ConnectionJet& jet, const Eigen::Vector2d& u,
                       const FiberChart& ch) {
    return total_matrix(H, jet, {jet.p, ch.lift(u)}, eps, ch);
  };

  // N^k_{ij} = M^l_i d_l M^k_j - M^l_j d_l M^k_i + M^k_l (d_j M^l_i - d_i M^l_j)
  // in total chart coordinates, where coordinate brackets vanish.
  auto tensor_at_step = [&](double h, const FiberChart& ch) {
    const Eigen::Vector2d u0 = ch.project(fp.r);
    const Eigen::MatrixXd M0 = matrix_at(jet0, u0, ch);
    std::vector<Eigen::MatrixXd> dM(static_cast<std::size_t>(N));
    par::for_index(n, [&](int k) {
      Point pp = fp.p, pm = fp.p;
      pp.v[static_cast<std::size_t>(k)] += h;
      pm.v[static_cast<std::size_t>(k)] -= h;
      const Eigen::MatrixXd Mp = matrix_at(minimal(H, pp, zero), u0, ch);
      const Eigen::MatrixXd Mm = matrix_at(minimal(H, pm, zero), u0, ch);
      dM[static_cast<std::size_t>(k)] = (Mp - Mm) / (2.0 * h);
    });
    for (int j = 0; j < 2; ++j) {
      Eigen::Vector2d up = u0, um = u0;
      up(j) += h;
      um(j) -= h;
      dM[static_cast<std::size_t>(n + j)] =
          (matrix_at(jet0, up, ch) - matrix_at(jet0, um, ch)) / (2.0 * h);
    }
    TwoFormValue Nt = TwoFormValue::zero(N);
    for (int k = 0; k < N; ++k)
      for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) {
          double s = 0.0;
          for (int l = 0; l < N; ++l) {
            const auto lz = static_cast<std::size_t>(l);
            s += M0(l, i) * dM[lz](k, j) - M0(l, j) * dM[lz](k, i) +
                 M0(k, l) * (dM[static_cast<std::size_t>(j)](l, i) -
                             dM[static_cast<std::size_t>(i)](l, j));
          }
          Nt.comp[static_cast<std::size_t>(k)](i, j) = s;
          Nt.comp[static_cast<std::size_t>(k)](j, i) = -s;
        }
    return Nt;
  };

  const TangentPairs tp = tangent_pairs(N, pairs, kPairSeed);
  auto run = [&](const FiberChart& ch) {
    TwoFormValue Nh = tensor_at_step(kStep, ch);
    double res = pair_residual(Nh, tp);
    std::string note = "central differences, step " + fmt(kStep);
    if (res > tol && res <= 10.0 * tol) {
      const TwoFormValue Nh2 = tensor_at_step(kStep / 2.0, ch);
      res = pair_residual((4.0 / 3.0) * Nh2 - (1.0 / 3.0) * Nh, tp);
      note += "; Richardson extrapolation at step " + fmt(kStep / 2.0);
    }
    return std::make_pair(res, note);
  };

  FiberChart chart = FiberChart::select(eps, fp.r);
  double residual = 0.0;
  std::string note;
  try {
    std::tie(residual, note) = run(chart);
  } catch (const Error& e) {
    if (std::string(e.what()).find("leaves the sheet") == std::string::npos) throw;
    chart = FiberChart::pivoted(eps, fp.r,
                                std::abs(fp.r(1)) >= std::abs(fp.r(2)) ? 1 : 2);
    std::tie(residual, note) = run(chart);
    note += "; re-parametrized on the spacelike-pivot chart";
  }

  const Eigen::MatrixXd M0 = matrix_at(jet0, chart.project(fp.r), chart);
  rep.add(make_check(
      "structure square",
      (M0 * M0 - static_cast<double>(eps) * Eigen::MatrixXd::Identity(N, N))
          .cwiseAbs()
          .maxCoeff(),
      kSquareTol));
  if (eps > 0) rep.add(make_check("trace balance", std::abs(M0.trace()), kTraceTol));
  rep.add(make_check("twistor nijenhuis", residual, tol, note));
  rep.classification = rep.pass() ? "integrable" : "not integrable";
  return rep;
}

IntegrabilityReport minimal_independence(const PqStructure& H,
                                         const FiberPoint& fp, int eps,
                                         const std::vector<OneForm>& alphas,
                                         double tol) {
  check_eps(eps);
  if (tol <= 0.0) throw Error("tolerance must be positive");
  if (fp.quadric_residual(eps) > kQuadricTol)
    throw Error("fiber point off the quadric");
  IntegrabilityReport rep;
  rep.samples = {fp.p};
  const int N = H.chart.dim() + 2;
  const FiberChart chart = FiberChart::select(eps, fp.r);
  const ConnectionJet jet0 = minimal(H, fp.p, OneForm::zero(H.chart));
  const Eigen::MatrixXd M0 = total_matrix(H, jet0, fp, eps, chart);
  rep.add(make_check(
      "structure square",
      (M0 * M0 - static_cast<double>(eps) * Eigen::MatrixXd::Identity(N, N))
          .cwiseAbs()
          .maxCoeff(),
      kSquareTol));
  std::vector<double> gap(alphas.size(), 0.0);
  par::for_index(static_cast<int>(alphas.size()), [&](int t) {
    const auto tz = static_cast<std::size_t>(t);
    const ConnectionJet jt = minimal(H, fp.p, alphas[tz]);
    gap[tz] = (total_matrix(H, jt, fp, eps, chart) - M0).cwiseAbs().maxCoeff();
  });
  double worst = 0.0;
  for (std::size_t t = 0; t < alphas.size(); ++t) {
    rep.add(make_check("minimal family alpha " + std::to_string(t + 1), gap[t], tol));
    worst = std::max(worst, gap[t]);
  }
  rep.add(make_check("minimal family max", worst, tol));
  rep.classification = rep.pass() ? "well defined" : "connection dependent";
  return rep;
}

IntegrabilityReport tautological_section_check(const PqStructure& H,
                                               const CompatibleStructure& J,
                                               const std::vector<Point>& samples,
                                               double tol) {
  if (samples.empty()) throw Error("no samples");
  if (tol <= 0.0) throw Error("tolerance must be positive");
  const int eps = J.sign;
  const int n = H.chart.dim();
  IntegrabilityReport rep;
  rep.samples = samples;

  const VectorTwoForm TP = torsion_TP(H);
  const TangentPairs base_pairs = tangent_pairs(n, kBasePairCount, kPairSeed);
  double tp_worst = 0.0;
  for (const Point& p : samples)
    tp_worst = std::max(tp_worst, pair_residual(TP.table_at(p), base_pairs));
  rep.add(measure_check("span torsion", tp_worst,
                        "hypothesis for the stability test, tol " + fmt(tol)));
  if (tp_worst > tol) {
    const std::string why = "hypothesis unmet: the span torsion does not vanish";
    rep.add(skip_check("section stability", why));
    rep.add(skip_check("verdict agreement", why));
    rep.classification = "hypothesis unmet";
    return rep;
  }

  const IntegrabilityReport nij = is_integrable(H, J, samples, tol);
  const bool integrable = nij.pass();
  rep.add(measure_check("section nijenhuis", nij.find("nijenhuis max")->residual,
                        "integrability side, tol " + fmt(tol)));

  std::vector<std::array<ScalarExpr, 3>> da(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    DiffCache d(H.chart.coords.at(static_cast<std::size_t>(k)));
    for (int i = 0; i < 3; ++i)
      da[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = d(J.elem.a[static_cast<std::size_t>(i)]);
  }

  const OneForm zero = OneForm::zero(H.chart);
  std::vector<double> stab(samples.size(), 0.0);
  par::for_index(static_cast<int>(samples.size()), [&](int s) {
    const Point& p = samples[static_cast<std::size_t>(s)];
    const FiberPoint fp{p, J.coeff_at(p)};
    const FiberChart chart = FiberChart::select(eps, fp.r);
    const Eigen::MatrixXd M = total_matrix(H, minimal(H, p, zero), fp, eps, chart);
    const auto pr = chart.params();
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n + 2, n);
    EvalCache cache(p);
    for (int k = 0; k < n; ++k) {
      const auto kz = static_cast<std::size_t>(k);
      T(k, k) = 1.0;
      const Eigen::Vector3d rdot(cache(da[kz][0]), cache(da[kz][1]), cache(da[kz][2]));
      T(n + 0, k) = rdot(pr[0]);
      T(n + 1, k) = rdot(pr[1]);
    }
    const Eigen::MatrixXd U = M * T;
    const Eigen::MatrixXd C = T.colPivHouseholderQr().solve(U);
    stab[static_cast<std::size_t>(s)] = (T * C - U).cwiseAbs().maxCoeff();
  });
  double stab_max = 0.0;
  for (double v : stab) stab_max = std::max(stab_max, v);
  rep.add(measure_check("section stability", stab_max,
                        "graph stability side, tol " + fmt(tol)));

  const bool stable = stab_max <= tol;
  const std::string note = std::string("stability ") + (stable ? "passes" : "fails") +
                           ", nijenhuis " + (integrable ? "passes" : "fails");
  rep.add(make_check("verdict agreement", stable == integrable ? 0.0 : 1.0, 0.5, note));
  rep.classification = (stable == integrable)
                           ? (integrable ? "stable integrable section"
                                         : "unstable obstructed section")
                           : "verdicts disagree";
  return rep;
}

}  // namespace pq
