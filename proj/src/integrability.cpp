#include "pq/integrability.hpp"

#include "pq/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <utility>

namespace pq {

namespace {

constexpr std::uint64_t kPairSeed = 0x51e9u;
constexpr int kPairCount = 16;
constexpr double kUnitTol = 1e-10;
constexpr double kMetricTol = 1e-6;  // degenerate-span and dependence margins
constexpr double kMargin = 1e-6;     // singular-locus clearance

using TangentPairs = std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>;

double pair_residual(const TwoFormValue& D, const TangentPairs& pairs) {
  double r = 0.0;
  for (const auto& [X, Y] : pairs)
    r = std::max(r, D.value(X, Y).lpNorm<Eigen::Infinity>());
  return r;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

}  // namespace

// --- sections and reports ------------------------------------------------

CompatibleStructure CompatibleStructure::constant(double a1, double a2, double a3) {
  const double norm2 = -a1 * a1 + a2 * a2 + a3 * a3;
  const int sign = norm2 >= 0.0 ? 1 : -1;
  if (std::abs(norm2 - sign) > kUnitTol)
    throw Error("coefficients do not square to +-Id: metric " + fmt(norm2));
  return {StructureElement::constant(a1, a2, a3), sign};
}

double CompatibleStructure::unit_residual(const Point& p) const {
  return std::abs(structure_metric(elem, elem, p) - sign);
}

CompatibleStructure compatible_section(ScalarExpr a1, ScalarExpr a2, ScalarExpr a3,
                                       int sign) {
  if (sign != 1 && sign != -1) throw Error("section sign must be +-1");
  return {StructureElement{{std::move(a1), std::move(a2), std::move(a3)}}, sign};
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass:
      return "pass";
    case Verdict::Fail:
      return "fail";
    default:
      return "skip";
  }
}

CheckResult make_check(std::string name, double residual, double tol, std::string note) {
  const Verdict v = residual <= tol ? Verdict::Pass : Verdict::Fail;
  return {std::move(name), residual, tol, v, std::move(note)};
}

CheckResult skip_check(std::string name, std::string note) {
  return {std::move(name), 0.0, 0.0, Verdict::Skip, std::move(note)};
}

CheckResult measure_check(std::string name, double residual, std::string note) {
  return {std::move(name), residual, 0.0, Verdict::Skip, std::move(note)};
}

void IntegrabilityReport::add(CheckResult r) {
  if (r.verdict == Verdict::Fail) verdict = Verdict::Fail;
  checks.push_back(std::move(r));
}

double IntegrabilityReport::max_residual() const {
  double m = 0.0;
  for (const auto& c : checks)
    if (c.verdict != Verdict::Skip) m = std::max(m, c.residual);
  return m;
}

const CheckResult* IntegrabilityReport::find(std::string_view name) const {
  for (const auto& c : checks)
    if (c.name == name) return &c;
  return nullptr;
}

// --- integrability of one section ----------------------------------------

namespace {

IntegrabilityReport nijenhuis_report(const VectorTwoForm& N, int n,
                                     const std::vector<Point>& samples, double tol) {
  IntegrabilityReport rep;
  rep.samples = samples;
  const TangentPairs pairs = tangent_pairs(n, kPairCount, kPairSeed);
  double worst = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    TwoFormValue t;
    try {
      t = N.table_at(samples[k]);
    } catch (const Error& e) {
      throw Error("evaluation failed at sample " + std::to_string(k) + ": " +
                  std::string(e.what()));
    }
    const double r = pair_residual(t, pairs);
    worst = std::max(worst, r);
    rep.add(make_check("nijenhuis sample " + std::to_string(k), r, tol));
  }
  rep.add(make_check("nijenhuis max", worst, tol));
  rep.classification = worst <= tol ? "integrable" : "not integrable";
  return rep;
}

}  // namespace

IntegrabilityReport is_integrable(const PqStructure& H, const CompatibleStructure& A,
                                  const std::vector<Point>& samples, double tol) {
  if (samples.empty()) throw Error("no samples");
  for (std::size_t k = 0; k < samples.size(); ++k)
    if (A.unit_residual(samples[k]) > kUnitTol)
      throw Error("section does not square to sign*Id at sample " + std::to_string(k));
  const EndomorphismField field = element_field(H, A.elem);
  return nijenhuis_report(nijenhuis(field, A.sign), H.chart.dim(), samples, tol);
}

IntegrabilityReport is_integrable(const EndomorphismField& J,
                                  const std::vector<Point>& samples, double tol) {
  if (samples.empty()) throw Error("no samples");
  const int n = J.chart.dim();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd first = J.eval(samples[0]);
  const Eigen::MatrixXd sq0 = first * first;
  const int sign = (sq0 - id).cwiseAbs().maxCoeff() <= (sq0 + id).cwiseAbs().maxCoeff()
                       ? 1
                       : -1;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const Eigen::MatrixXd Jp = J.eval(samples[k]);
    if ((Jp * Jp - sign * id).cwiseAbs().maxCoeff() > 1e-8)
      throw Error("field does not square to +-Id at sample " + std::to_string(k));
  }
  return nijenhuis_report(nijenhuis(J, sign), n, samples, tol);
}

// --- involutivity ---------------------------------------------------------

IntegrabilityReport involutive(const std::vector<VectorField>& frame,
                               const std::vector<Point>& samples, double tol) {
  if (frame.empty()) throw Error("empty frame");
  if (samples.empty()) throw Error("no samples");
  const int n = frame[0].chart.dim();
  const int r = static_cast<int>(frame.size());

  std::vector<VectorField> brackets;
  brackets.reserve(static_cast<std::size_t>(r) * (r - 1) / 2);
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j) brackets.push_back(lie_bracket(frame[i], frame[j]));

  IntegrabilityReport rep;
  rep.samples = samples;
  int rank0 = -1;
  double worst = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const Point& p = samples[k];
    Eigen::MatrixXd F(n, r);
    for (int i = 0; i < r; ++i) F.col(i) = frame[i].eval(p);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(F);
    qr.setThreshold(1e-9);
    const int rank = static_cast<int>(qr.rank());
    if (rank0 < 0)
      rank0 = rank;
    else if (rank != rank0)
      throw Error("frame rank drops from " + std::to_string(rank0) + " to " +
                  std::to_string(rank) + " at sample " + std::to_string(k));
    double rs = 0.0;
    for (const VectorField& b : brackets) {
      const Eigen::VectorXd bv = b.eval(p);
      const Eigen::VectorXd c = qr.solve(bv);
      rs = std::max(rs, (F * c - bv).lpNorm<Eigen::Infinity>());
    }
    worst = std::max(worst, rs);
    rep.add(make_check("bracket span sample " + std::to_string(k), rs, tol));
  }
  rep.add(make_check("bracket span max", worst, tol));
  rep.classification = worst <= tol ? "involutive" : "not involutive";
  return rep;
}

// --- PDE residual of the diagonal family ----------------------------------

double pde_residual(const Chart& c, const std::vector<std::vector<ScalarExpr>>& f,
                    const Point& p) {
  const int w = 2 * c.m;
  if (static_cast<int>(f.size()) != w) throw Error("matrix size mismatch with the chart");
  for (const auto& row : f)
    if (static_cast<int>(row.size()) != w)
      throw Error("matrix size mismatch with the chart");

  Eigen::MatrixXd fv(w, w);
  for (int i = 0; i < w; ++i)
    for (int t = 0; t < w; ++t) fv(i, t) = evaluate(f[i][t], p);
  if (std::abs(fv.determinant()) < 1e-10) throw Error("singular point");

  // dx[i][t][a] = d f_{it} / d x_a at p, dy likewise in y_a.
  std::vector<std::vector<std::vector<double>>> dx(
      w, std::vector<std::vector<double>>(w, std::vector<double>(w)));
  auto dy = dx;
  for (int i = 0; i < w; ++i)
    for (int t = 0; t < w; ++t)
      for (int a = 0; a < w; ++a) {
        dx[i][t][a] = evaluate(differentiate(f[i][t], c.coords[c.x_index(a + 1)]), p);
        dy[i][t][a] = evaluate(differentiate(f[i][t], c.coords[c.y_index(a + 1)]), p);
      }

  double worst = 0.0;
  for (int i = 0; i < w; ++i)
    for (int j = i + 1; j < w; ++j)
      for (int t = 0; t < w; ++t) {
        double v = dx[j][t][i] - dx[i][t][j];
        for (int k = 0; k < w; ++k) v += fv(i, k) * dy[j][t][k] - fv(j, k) * dy[i][t][k];
        worst = std::max(worst, std::abs(v));
      }
  return worst;
}

std::vector<std::vector<ScalarExpr>> diagonal_matrix(const std::vector<ScalarExpr>& diag) {
  const std::size_t w = diag.size();
  std::vector<std::vector<ScalarExpr>> f(
      w, std::vector<ScalarExpr>(w, ScalarExpr::constant(0.0)));
  for (std::size_t i = 0; i < w; ++i) f[i][i] = diag[i];
  return f;
}

// --- span normal forms ----------------------------------------------------

namespace {

struct Arrangement {
  std::array<int, 3> order;
  std::array<int, 3> flip;
};

// Permutation and sign flips bringing the pairwise metrics to the target
// pattern (m01, m12, m02).
std::optional<Arrangement> find_arrangement(const Eigen::Matrix3d& metric,
                                            const Eigen::Vector3d& target) {
  static const std::array<std::array<int, 3>, 6> perms{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  for (const auto& perm : perms)
    for (int mask = 0; mask < 8; ++mask) {
      const std::array<int, 3> s{(mask & 1) ? -1 : 1, (mask & 2) ? -1 : 1,
                                 (mask & 4) ? -1 : 1};
      const double m01 = s[0] * s[1] * metric(perm[0], perm[1]);
      const double m12 = s[1] * s[2] * metric(perm[1], perm[2]);
      const double m02 = s[0] * s[2] * metric(perm[0], perm[2]);
      if (std::abs(m01 - target(0)) <= kMetricTol &&
          std::abs(m12 - target(1)) <= kMetricTol &&
          std::abs(m02 - target(2)) <= kMetricTol)
        return Arrangement{perm, s};
    }
  return std::nullopt;
}

double admissibility_residual(const Eigen::Vector3d& c1, const Eigen::Vector3d& c2,
                              const Eigen::Vector3d& c3) {
  double r = std::abs(lorentz_dot(c1, c1) + 1.0);
  r = std::max(r, std::abs(lorentz_dot(c2, c2) - 1.0));
  r = std::max(r, std::abs(lorentz_dot(c3, c3) - 1.0));
  r = std::max(r, std::abs(lorentz_dot(c1, c2)));
  r = std::max(r, std::abs(lorentz_dot(c1, c3)));
  r = std::max(r, std::abs(lorentz_dot(c2, c3)));
  r = std::max(r, (lorentz_cross(c1, c2) - c3).lpNorm<Eigen::Infinity>());
  return r;
}

}  // namespace

BazeNormalForm baze_normal_form(const PqStructure& H,
                                const std::vector<CompatibleStructure>& I,
                                const Point& p) {
  const std::size_t cnt = I.size();
  if (cnt != 2 && cnt != 3) throw Error("expected two or three sections");
  std::vector<Eigen::Vector3d> c(cnt);
  for (std::size_t k = 0; k < cnt; ++k) {
    if (I[k].unit_residual(p) > kUnitTol)
      throw Error("section " + std::to_string(k) + " does not square to sign*Id");
    c[k] = I[k].coeff_at(p);
  }
  for (std::size_t i = 0; i < cnt; ++i)
    for (std::size_t j = i + 1; j < cnt; ++j) {
      const Eigen::Vector3d cr = c[i].cross(c[j]);
      if (cr.norm() <= kMetricTol * c[i].norm() * c[j].norm())
        throw Error("dependent inputs: sections " + std::to_string(i) + " and " +
                    std::to_string(j));
    }

  BazeNormalForm out;
  for (std::size_t i = 0; i < cnt; ++i)
    for (std::size_t j = 0; j < cnt; ++j)
      out.metric(static_cast<int>(i), static_cast<int>(j)) = lorentz_dot(c[i], c[j]);

  if (cnt == 2) {
    const double gram =
        out.metric(0, 0) * out.metric(1, 1) - out.metric(0, 1) * out.metric(0, 1);
    out.classification =
        std::abs(gram) <= kMetricTol ? "pair span degenerate" : "pair span non-degenerate";
    return out;
  }

  for (std::size_t k = 0; k < cnt; ++k)
    if (I[k].sign != 1) throw Error("triple normal forms need para-complex sections");
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j)
      if (std::abs(std::abs(out.metric(i, j)) - 1.0) > kMetricTol) {
        out.classification = "triple with a non-degenerate span";
        return out;
      }

  const double product = out.metric(0, 1) * out.metric(1, 2) * out.metric(0, 2);
  const BasisValue B = basis_at(H, p);
  auto span_matrix = [&](const Eigen::Vector3d& v) {
    Eigen::MatrixXd M = v(0) * B.J[0] + v(1) * B.J[1] + v(2) * B.J[2];
    return M;
  };

  if (product > 0.0) {
    // Dependent family. Normalize to metrics <12> = <23> = -1, <13> = +1.
    const auto arr = find_arrangement(out.metric, Eigen::Vector3d(-1.0, -1.0, 1.0));
    if (!arr) throw Error("no arrangement matches the dependent-span pattern");
    out.order = arr->order;
    out.flip = arr->flip;
    const Eigen::Vector3d v1 = arr->flip[0] * c[arr->order[0]];
    const Eigen::Vector3d v2 = arr->flip[1] * c[arr->order[1]];
    const Eigen::Vector3d v3 = arr->flip[2] * c[arr->order[2]];

    const Eigen::Vector3d W = v1 + v2;  // null, orthogonal to v1
    if (W.norm() <= kMetricTol) throw Error("dependent inputs: opposite sections");
    const double a = (v3 - v1).dot(W) / W.squaredNorm();
    double recon = ((v3 - v1) - a * W).lpNorm<Eigen::Infinity>();

    // Complete v1 to an oriented orthonormal frame of the span metric.
    Eigen::Vector3d seed(1.0, 0.0, 0.0);
    Eigen::Vector3d t = seed - lorentz_dot(seed, v1) * v1;
    t /= std::sqrt(-lorentz_dot(t, t));
    const Eigen::Vector3d s = lorentz_cross(t, v1);

    const double wt = -lorentz_dot(W, t);
    if (std::abs(wt) <= kMetricTol) throw Error("null component degenerates");
    const double rp = (W - wt * (t + s)).lpNorm<Eigen::Infinity>();
    const double rm = (W - wt * (t - s)).lpNorm<Eigen::Infinity>();
    const int q = rp <= rm ? 1 : -1;
    const double theta = q * std::log(std::abs(wt));
    const double sigma = wt >= 0.0 ? 1.0 : -1.0;
    const Eigen::Vector3d c1 = sigma * (std::cosh(theta) * t + std::sinh(theta) * s);
    const Eigen::Vector3d c3 = sigma * (std::sinh(theta) * t + std::cosh(theta) * s);

    recon = std::max(recon, admissibility_residual(c1, v1, c3));
    recon = std::max(recon, (v2 - (c1 - v1 + q * c3)).lpNorm<Eigen::Infinity>());
    recon = std::max(recon, (v3 - (a * c1 + v1 + a * q * c3)).lpNorm<Eigen::Infinity>());

    out.classification = "degenerate spans, dependent triple";
    out.basis_coeff = {c1, v1, c3};
    out.basis = {span_matrix(c1), span_matrix(v1), span_matrix(c3)};
    out.a = a;
    out.q = q;
    out.reconstruction_residual = recon;
    return out;
  }

  // Independent family. Normalize to metrics <12> = +1, <23> = -1, <13> = +1.
  const auto arr = find_arrangement(out.metric, Eigen::Vector3d(1.0, -1.0, 1.0));
  if (!arr) throw Error("no arrangement matches the independent-span pattern");
  out.order = arr->order;
  out.flip = arr->flip;
  Eigen::Vector3d v1 = arr->flip[0] * c[arr->order[0]];
  Eigen::Vector3d v2 = arr->flip[1] * c[arr->order[1]];
  Eigen::Vector3d v3 = arr->flip[2] * c[arr->order[2]];

  Eigen::Vector3d u1 = 0.5 * (v2 + v3) - v1;
  Eigen::Vector3d u3 = 0.5 * (v2 - v3);
  if ((lorentz_cross(u1, v1) - u3).lpNorm<Eigen::Infinity>() >
      (lorentz_cross(u1, v1) + u3).lpNorm<Eigen::Infinity>()) {
    std::swap(v2, v3);  // swapping the outer sections reverses u3
    std::swap(out.order[1], out.order[2]);
    std::swap(out.flip[1], out.flip[2]);
    u3 = -u3;
  }

  double recon = admissibility_residual(u1, v1, u3);
  recon = std::max(recon, (v2 - (u1 + v1 + u3)).lpNorm<Eigen::Infinity>());
  recon = std::max(recon, (v3 - (u1 + v1 - u3)).lpNorm<Eigen::Infinity>());

  out.classification = "degenerate spans, independent triple";
  out.basis_coeff = {u1, v1, u3};
  out.basis = {span_matrix(u1), span_matrix(v1), span_matrix(u3)};
  out.reconstruction_residual = recon;
  return out;
}

// --- classification of vanishing-torsion families --------------------------

IntegrabilityReport theorem_sug_classify(const PqStructure& H,
                                         const std::vector<CompatibleStructure>& I,
                                         const std::vector<Point>& samples, double tol) {
  const std::size_t cnt = I.size();
  if (cnt != 2 && cnt != 3) throw Error("expected two or three sections");
  if (samples.empty()) throw Error("no samples");

  IntegrabilityReport rep;
  rep.samples = samples;
  const int n = H.chart.dim();
  const TangentPairs pairs = tangent_pairs(n, kPairCount, kPairSeed);

  std::vector<double> nmax(cnt, 0.0);
  for (std::size_t k = 0; k < cnt; ++k) {
    double u = 0.0;
    for (const Point& p : samples) u = std::max(u, I[k].unit_residual(p));
    rep.add(make_check("unit section I" + std::to_string(k + 1), u, kUnitTol));
    const IntegrabilityReport sub = is_integrable(H, I[k], samples, tol);
    nmax[k] = sub.find("nijenhuis max")->residual;
    rep.add(make_check("nijenhuis I" + std::to_string(k + 1), nmax[k], tol));
  }

  // Pairwise data across all samples.
  std::array<std::array<bool, 3>, 3> indep{}, degenerate{}, nondeg{};
  for (std::size_t i = 0; i < cnt; ++i)
    for (std::size_t j = i + 1; j < cnt; ++j) {
      bool ind = true, deg = true, nod = true;
      for (const Point& p : samples) {
        const Eigen::Vector3d ci = I[i].coeff_at(p), cj = I[j].coeff_at(p);
        if (ci.cross(cj).norm() <= kMetricTol * ci.norm() * cj.norm()) ind = false;
        const double gap = std::abs(std::abs(lorentz_dot(ci, cj)) - 1.0);
        if (gap > kMetricTol) deg = false;
        if (gap < kMetricTol) nod = false;
      }
      indep[i][j] = ind;
      degenerate[i][j] = deg;
      nondeg[i][j] = nod;
    }

  bool triple_dependent = cnt == 3;
  if (cnt == 3)
    for (const Point& p : samples) {
      Eigen::Matrix3d M;
      for (int k = 0; k < 3; ++k) M.row(k) = I[k].coeff_at(p).transpose();
      const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(M.transpose() * M);
      if (std::sqrt(std::max(es.eigenvalues()(0), 0.0)) >
          kMetricTol * std::sqrt(es.eigenvalues()(2)))
        triple_dependent = false;
    }

  const auto integ = [&](std::size_t k) { return nmax[k] <= tol; };
  std::string cls = "no case applies";
  std::string note;
  for (std::size_t i = 0; i < cnt && cls == "no case applies"; ++i)
    for (std::size_t j = i + 1; j < cnt; ++j)
      if (indep[i][j] && integ(i) && integ(j) &&
          (I[i].sign == -1 || I[j].sign == -1)) {
        cls = "independent pair with a complex member";
        note = "pair I" + std::to_string(i + 1) + ", I" + std::to_string(j + 1);
        break;
      }
  if (cls == "no case applies")
    for (std::size_t i = 0; i < cnt && cls == "no case applies"; ++i)
      for (std::size_t j = i + 1; j < cnt; ++j)
        if (indep[i][j] && integ(i) && integ(j) && I[i].sign == 1 && I[j].sign == 1 &&
            nondeg[i][j]) {
          cls = "independent para pair, non-degenerate span";
          note = "pair I" + std::to_string(i + 1) + ", I" + std::to_string(j + 1);
          break;
        }
  if (cls == "no case applies" && cnt == 3) {
    bool all_para = I[0].sign == 1 && I[1].sign == 1 && I[2].sign == 1;
    bool all_int = integ(0) && integ(1) && integ(2);
    bool all_ind = indep[0][1] && indep[0][2] && indep[1][2];
    bool all_deg = degenerate[0][1] && degenerate[0][2] && degenerate[1][2];
    if (all_para && all_int && all_ind && all_deg && triple_dependent) {
      cls = "dependent para triple, degenerate spans";
    } else if (all_para && all_int && all_ind && all_deg) {
      note = "pairwise spans degenerate but the triple is pointwise independent";
    }
  }
  if (cls == "no case applies" && note.empty()) {
    std::ostringstream os;
    os << "metrics at sample 0:";
    for (std::size_t i = 0; i < cnt; ++i)
      for (std::size_t j = i + 1; j < cnt; ++j)
        os << " <I" << i + 1 << ",I" << j + 1 << "> = "
           << fmt(lorentz_dot(I[i].coeff_at(samples[0]), I[j].coeff_at(samples[0])));
    note = os.str();
  }
  rep.classification = cls;
  rep.add(skip_check("classification", cls + (note.empty() ? "" : "; " + note)));

  const VectorTwoForm TP = torsion_TP(H);
  double tp = 0.0;
  for (const Point& p : samples) tp = std::max(tp, pair_residual(TP.table_at(p), pairs));
  if (cls != "no case applies")
    rep.add(make_check("span torsion", tp, tol, "asserted by the classification"));
  else
    rep.add(measure_check("span torsion", tp, "not asserted: no case applies"));
  return rep;
}

// --- the fixed-triple equivalence ------------------------------------------

IntegrabilityReport lemma_pe_check(const PqStructure& H,
                                   const std::vector<Point>& samples, double tol) {
  if (samples.empty()) throw Error("no samples");
  IntegrabilityReport rep;
  rep.samples = samples;
  const int n = H.chart.dim();

  const std::array<CompatibleStructure, 3> I{CompatibleStructure::constant(0, 1, 0),
                                             CompatibleStructure::constant(1, 1, 1),
                                             CompatibleStructure::constant(1, 1, -1)};
  double left = 0.0;
  for (int k = 0; k < 3; ++k) {
    const IntegrabilityReport sub = is_integrable(H, I[k], samples, tol);
    const double r = sub.find("nijenhuis max")->residual;
    left = std::max(left, r);
    rep.add(make_check("nijenhuis I" + std::to_string(k + 1), r, tol));
  }

  const IntegrabilityReport sub2 = is_integrable(H.J2(), samples, tol);
  const double nj2 = sub2.find("nijenhuis max")->residual;
  rep.add(make_check("nijenhuis J2", nj2, tol));

  // Frame of the +1 eigenbundle of J3: columns of J3 + Id, rank n/2.
  std::vector<VectorField> frame;
  frame.reserve(n);
  for (int col = 0; col < n; ++col) {
    VectorField X = VectorField::zero(H.chart);
    for (int row = 0; row < n; ++row) {
      X.comp[row] = H.J3().at(row, col);
      if (row == col) X.comp[row] = X.comp[row] + ScalarExpr::constant(1.0);
    }
    frame.push_back(std::move(X));
  }
  const IntegrabilityReport inv = involutive(frame, samples, tol);
  const double invr = inv.find("bracket span max")->residual;
  rep.add(make_check("eigenbundle involutive", invr, tol));

  const bool lpass = left <= tol;
  const bool rpass = nj2 <= tol && invr <= tol;
  rep.add(make_check("verdict agreement", lpass == rpass ? 0.0 : 1.0, 0.5,
                     std::string(lpass ? "left passes" : "left fails") + ", " +
                         (rpass ? "right passes" : "right fails")));
  rep.classification = lpass && rpass ? "integrable triple" : "obstructed triple";
  return rep;
}

// --- proof-identity battery -------------------------------------------------

namespace {

struct SampleTables {
  BasisValue B;
  std::array<TwoFormValue, 3> N;
  TwoFormValue TH;
  std::array<std::array<TwoFormValue, 3>, 3> Br;  // i <= j filled
  std::array<TwoFormValue, 3> NP;                 // J1J2, J2J3, J1J3
  TwoFormValue obataT;
};

}  // namespace

IntegrabilityReport proof_identity_suite(const PqStructure& H,
                                         const std::vector<Point>& samples, double tol,
                                         const std::optional<SpanSection>& section) {
  if (samples.empty()) throw Error("no samples");
  IntegrabilityReport rep;
  rep.samples = samples;
  const int n = H.chart.dim();
  const TangentPairs pairs = tangent_pairs(n, kPairCount, kPairSeed);

  std::array<VectorTwoForm, 3> Nf{nijenhuis(H.J[0], H.eps[0]),
                                  nijenhuis(H.J[1], H.eps[1]),
                                  nijenhuis(H.J[2], H.eps[2])};
  const VectorTwoForm THf = torsion_TH(H);
  std::array<std::array<VectorTwoForm, 3>, 3> Brf;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) Brf[i][j] = nijenhuis_bracket(H.J[i], H.J[j]);
  struct ProdSpec {
    int i, j, eps;
  };
  // The products square to -eps_i eps_j Id.
  const std::array<ProdSpec, 3> prods{{{0, 1, 1}, {1, 2, -1}, {0, 2, 1}}};
  std::array<VectorTwoForm, 3> NPf;
  for (int t = 0; t < 3; ++t)
    NPf[t] = nijenhuis(H.J[prods[t].i] * H.J[prods[t].j], prods[t].eps);

  std::vector<SampleTables> tabs;
  tabs.reserve(samples.size());
  for (const Point& p : samples) {
    SampleTables t{basis_at(H, p),
                   {Nf[0].table_at(p), Nf[1].table_at(p), Nf[2].table_at(p)},
                   THf.table_at(p),
                   {},
                   {NPf[0].table_at(p), NPf[1].table_at(p), NPf[2].table_at(p)},
                   obata(H, p).torsion()};
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) t.Br[i][j] = Brf[i][j].table_at(p);
    tabs.push_back(std::move(t));
  }

  std::array<double, 3> gate{0.0, 0.0, 0.0};
  for (const SampleTables& t : tabs)
    for (int i = 0; i < 3; ++i)
      gate[i] = std::max(gate[i], pair_residual(t.N[i], pairs));

  // Collects the max residual of a per-sample difference table.
  const auto item = [&](const std::string& name,
                        const std::function<TwoFormValue(const SampleTables&)>& diff,
                        double tolerance, std::string note = "") {
    double r = 0.0;
    for (const SampleTables& t : tabs) r = std::max(r, pair_residual(diff(t), pairs));
    rep.add(make_check(name, r, tolerance, std::move(note)));
  };
  const auto gated = [&](const std::string& name, double g, const std::string& why,
                         const std::function<TwoFormValue(const SampleTables&)>& diff,
                         double tolerance, std::string note = "") {
    if (g > tol) {
      rep.add(skip_check(name, "hypothesis unmet: " + why));
      return;
    }
    item(name, diff, tolerance, std::move(note));
  };

  // Argument-shift symmetries of each Nijenhuis tensor.
  for (int i = 0; i < 3; ++i) {
    double r = 0.0;
    for (const SampleTables& t : tabs) {
      const Eigen::MatrixXd& J = t.B.J[i];
      const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(J.rows(), J.cols());
      const TwoFormValue shifted = pull(t.N[i], J, id);
      r = std::max(r, pair_residual(shifted - pull(t.N[i], id, J), pairs));
      r = std::max(r, pair_residual(shifted + compose(J, t.N[i]), pairs));
    }
    rep.add(make_check("nijenhuis shift J" + std::to_string(i + 1), r, tol));
  }

  // Nijenhuis tensor of a product of anti-commuting members.
  const std::array<std::string, 3> pname{"J1J2", "J2J3", "J1J3"};
  for (int t3 = 0; t3 < 3; ++t3) {
    const int i = prods[t3].i, j = prods[t3].j;
    const double ei = H.eps[i], ej = H.eps[j];
    item("product nijenhuis " + pname[t3], [=](const SampleTables& t) {
      const Eigen::MatrixXd &Ji = t.B.J[i], &Jj = t.B.J[j];
      const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(Ji.rows(), Ji.cols());
      TwoFormValue rhs = pull(t.N[i], Jj, Jj) - ei * t.N[j] -
                         compose(Ji, pull(t.N[j], Ji, id)) -
                         compose(Ji, pull(t.N[j], id, Ji)) - ej * t.N[i] +
                         pull(t.N[j], Ji, Ji) - compose(Jj, pull(t.N[i], id, Jj)) -
                         compose(Jj, pull(t.N[i], Jj, id));
      return 2.0 * t.NP[t3] - rhs;
    }, tol);
    gated("product integrability " + pname[t3], std::max(gate[i], gate[j]),
          "J" + std::to_string(i + 1) + " or J" + std::to_string(j + 1) +
              " not integrable",
          [=](const SampleTables& t) { return t.NP[t3]; }, 10.0 * tol);
  }

  // Bracket reconstruction from the torsion of a preserving connection.
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j)
      item("bracket via torsion J" + std::to_string(i + 1) + ",J" + std::to_string(j + 1),
           [=](const SampleTables& t) {
             const Eigen::MatrixXd &A = t.B.J[i], &Bm = t.B.J[j];
             const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(A.rows(), A.cols());
             const TwoFormValue& T = t.obataT;
             TwoFormValue rhs = compose(A, pull(T, Bm, id) + pull(T, id, Bm)) +
                                compose(Bm, pull(T, id, A) + pull(T, A, id)) -
                                pull(T, A, Bm) - pull(T, Bm, A) -
                                compose(A * Bm + Bm * A, T);
             return t.Br[i][j] - rhs;
           },
           tol);

  // Reductions available once J1 is integrable.
  gated("torsion from N2 (J1 integrable)", gate[0], "J1 not integrable",
        [](const SampleTables& t) {
          const Eigen::MatrixXd& J1 = t.B.J[0];
          const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(J1.rows(), J1.cols());
          return 12.0 * t.TH + 3.0 * t.N[1] - compose(J1, pull(t.N[1], J1, id)) -
                 compose(J1, pull(t.N[1], id, J1)) + pull(t.N[1], J1, J1);
        }, tol);
  gated("N3 from N2 (J1 integrable)", gate[0], "J1 not integrable",
        [](const SampleTables& t) {
          const Eigen::MatrixXd& J1 = t.B.J[0];
          const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(J1.rows(), J1.cols());
          return 2.0 * t.N[2] - t.N[1] + compose(J1, pull(t.N[1], J1, id)) +
                 compose(J1, pull(t.N[1], id, J1)) - pull(t.N[1], J1, J1);
        }, tol);
  gated("bracket J1J2 from N2 (J1 integrable)", gate[0], "J1 not integrable",
        [](const SampleTables& t) {
          const Eigen::MatrixXd &J1 = t.B.J[0], &J2 = t.B.J[1], &J3 = t.B.J[2];
          const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(J1.rows(), J1.cols());
          return 2.0 * t.Br[0][1] - compose(J3, t.N[1]) + compose(J3, pull(t.N[1], J1, J1)) +
                 compose(J2, pull(t.N[1], J1, id) + pull(t.N[1], id, J1));
        }, tol);

  // Reductions available once J2 is integrable.
  gated("torsion from N1 (J2 integrable)", gate[1], "J2 not integrable",
        [](const SampleTables& t) {
          const Eigen::MatrixXd& J2 = t.B.J[1];
          const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(J2.rows(), J2.cols());
          return 12.0 * t.TH - 3.0 * t.N[0] + pull(t.N[0], J2, J2) -
                 compose(J2, pull(t.N[0], id, J2) + pull(t.N[0], J2, id));
        }, tol);
  gated("N3 from N1 (J2 integrable)", gate[1], "J2 not integrable",
        [](const SampleTables& t) {
          const Eigen::MatrixXd& J2 = t.B.J[1];
          const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(J2.rows(), J2.cols());
          return 2.0 * t.N[2] - pull(t.N[0], J2, J2) + t.N[0] +
                 compose(J2, pull(t.N[0], id, J2)) + compose(J2, pull(t.N[0], J2, id));
        }, tol);
  gated("N1 from N3 (J2 integrable)", gate[1], "J2 not integrable",
        [](const SampleTables& t) {
          const Eigen::MatrixXd& J2 = t.B.J[1];
          const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(J2.rows(), J2.cols());
          return 2.0 * t.N[0] + t.N[2] + compose(J2, pull(t.N[2], J2, id)) +
                 compose(J2, pull(t.N[2], id, J2)) - pull(t.N[2], J2, J2);
        }, tol, "degenerate last term read with arguments (J2 X, J2 Y)");
  gated("bracket J1J2 from N1 (J2 integrable)", gate[1], "J2 not integrable",
        [](const SampleTables& t) {
          const Eigen::MatrixXd &J1 = t.B.J[0], &J2 = t.B.J[1], &J3 = t.B.J[2];
          const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(J1.rows(), J1.cols());
          return 2.0 * t.Br[0][1] -
                 compose(J1, pull(t.N[0], J2, id) + pull(t.N[0], id, J2)) -
                 compose(J3, pull(t.N[0], J2, J2) + t.N[0]);
        }, tol);
  gated("bracket J1J3 from N1 (J2 integrable)", gate[1], "J2 not integrable",
        [](const SampleTables& t) {
          const Eigen::MatrixXd &J2 = t.B.J[1];
          const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(J2.rows(), J2.cols());
          return 2.0 * t.Br[0][2] - pull(t.N[0], J2, id) - pull(t.N[0], id, J2) +
                 compose(J2, pull(t.N[0], J2, J2) + t.N[0]);
        }, tol);
  gated("bracket J2J3 from N1 (J2 integrable)", gate[1], "J2 not integrable",
        [](const SampleTables& t) {
          const Eigen::MatrixXd &J1 = t.B.J[0], &J2 = t.B.J[1], &J3 = t.B.J[2];
          const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(J1.rows(), J1.cols());
          return 2.0 * t.Br[1][2] - compose(J1, pull(t.N[0], J2, J2) + t.N[0]) -
                 compose(J3, pull(t.N[0], J2, id) + pull(t.N[0], id, J2));
        }, tol);

  // Eigenbundle chain: the projected sum, J3-equivariance of N1 and the
  // fixed-point condition on N3, with both implication directions.
  std::vector<double> single_r, equiv_r, fixed_r;
  for (const SampleTables& t : tabs) {
    const Eigen::MatrixXd &J2 = t.B.J[1], &J3 = t.B.J[2];
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(J2.rows(), J2.cols());
    const TwoFormValue E = pull(t.N[0], J2, J2) + t.N[0];
    single_r.push_back(pair_residual(compose(id + J3, E), pairs));
    equiv_r.push_back(pair_residual(pull(t.N[0], J3, J3) - compose(J3, t.N[0]), pairs));
    fixed_r.push_back(pair_residual(compose(J3, t.N[2]) - t.N[2], pairs));
  }
  const auto vmax = [](const std::vector<double>& v) {
    return *std::max_element(v.begin(), v.end());
  };
  rep.add(measure_check("sum projection residual", vmax(single_r), "measured"));
  rep.add(measure_check("J3 equivariance residual", vmax(equiv_r), "measured"));
  rep.add(measure_check("J3 fixed-point residual", vmax(fixed_r), "measured"));
  const auto chain = [&](const std::string& name, const std::vector<double>& lhs,
                         const std::vector<double>& rhs, double g, const std::string& why) {
    if (g > tol) {
      rep.add(skip_check(name, "hypothesis unmet: " + why));
      return;
    }
    double worst = -1.0;
    for (std::size_t k = 0; k < lhs.size(); ++k)
      if (lhs[k] <= tol) worst = std::max(worst, rhs[k]);
    if (worst < 0.0) {
      rep.add(skip_check(name, "hypothesis unmet at all samples"));
      return;
    }
    rep.add(make_check(name, worst, 10.0 * tol));
  };
  chain("chain sum projection to J3 equivariance", single_r, equiv_r, 0.0, "");
  chain("chain J3 equivariance to sum projection", equiv_r, single_r, 0.0, "");
  chain("chain J3 equivariance to J3 fixed point", equiv_r, fixed_r, gate[1],
        "J2 not integrable");
  chain("chain J3 fixed point to J3 equivariance", fixed_r, equiv_r, gate[1],
        "J2 not integrable");

  // Quotient relations against a second integrable section a J1 + b J2.
  if (section) {
    std::vector<double> av(samples.size()), bv(samples.size());
    int sign2 = 0;
    double unit = 0.0, bmin = 1e300;
    for (std::size_t k = 0; k < samples.size(); ++k) {
      av[k] = evaluate(section->a, samples[k]);
      bv[k] = evaluate(section->b, samples[k]);
      const double m = -av[k] * av[k] + bv[k] * bv[k];
      if (k == 0) sign2 = m >= 0.0 ? 1 : -1;
      unit = std::max(unit, std::abs(m - sign2));
      bmin = std::min(bmin, std::abs(bv[k]));
    }
    double sec_gate = gate[0];
    std::string why = "J1 not integrable";
    if (unit > kUnitTol) {
      sec_gate = 1.0;
      why = "section does not square to +-Id";
    } else if (bmin <= kMargin) {
      sec_gate = 1.0;
      why = "section not independent of J1";
    } else {
      const CompatibleStructure cs =
          compatible_section(section->a, section->b, ScalarExpr::constant(0.0), sign2);
      const IntegrabilityReport sub = is_integrable(H, cs, samples, tol);
      sec_gate = std::max(sec_gate, sub.find("nijenhuis max")->residual);
      if (sec_gate > tol && gate[0] <= tol) why = "section not integrable";
    }

    const auto quotient = [&](const TwoFormValue& D, const BasisValue& B) {
      return pair_residual(tp_value(projector_value(D, B), B), pairs);
    };
    const auto span_item = [&](const std::string& name, bool need_a,
                               const std::function<TwoFormValue(const SampleTables&, double,
                                                                double)>& diff) {
      if (sec_gate > tol) {
        rep.add(skip_check(name, "hypothesis unmet: " + why));
        return;
      }
      double r = -1.0;
      for (std::size_t k = 0; k < tabs.size(); ++k) {
        if (need_a && std::abs(av[k]) <= kMargin) continue;
        r = std::max(r, quotient(diff(tabs[k], av[k], bv[k]), tabs[k].B));
      }
      if (r < 0.0) {
        rep.add(skip_check(name, "no samples clear the coefficient threshold"));
        return;
      }
      rep.add(make_check(name, r, tol));
    };

    span_item("span relation full", false, [](const SampleTables& t, double a, double b) {
      return (a * a) * t.N[0] + (b * b) * t.N[1] + (a * b) * t.Br[0][1];
    });
    span_item("span relation reduced", false, [](const SampleTables& t, double a, double b) {
      return (b * b) * t.N[1] + (a * b) * t.Br[0][1];
    });
    span_item("span relation rescaled", true, [](const SampleTables& t, double a, double b) {
      const Eigen::MatrixXd &J1 = t.B.J[0], &J3 = t.B.J[2];
      return (2.0 * b / a) * t.N[1] + compose(J3, t.N[1]) -
             compose(J3, pull(t.N[1], J1, J1));
    });
    span_item("span relation mixed arguments", true,
              [](const SampleTables& t, double, double) {
                const Eigen::MatrixXd& J1 = t.B.J[0];
                const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(J1.rows(), J1.cols());
                return pull(t.N[1], J1, id) + pull(t.N[1], id, J1);
              });
    span_item("span relation J1 pullback", true,
              [](const SampleTables& t, double, double) {
                const Eigen::MatrixXd& J1 = t.B.J[0];
                return pull(t.N[1], J1, J1) - t.N[1];
              });
  }

  rep.classification = rep.pass() ? "identities hold" : "identities violated";
  return rep;
}

// --- para-quaternionicity witness -------------------------------------------

namespace {

// Least-squares defect of T = delta(sum_i alpha_i (x) J_i + alpha (x) Id) in
// the unknown covectors; positive defect certifies that no such forms exist.
double delta_realization_defect(const BasisValue& B, const TwoFormValue& T) {
  const int n = B.n();
  const int rows = n * n * (n - 1) / 2;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, 4 * n);
  Eigen::VectorXd b(rows);
  int row = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int r = 0; r < n; ++r, ++row) {
        for (int t = 0; t < 3; ++t) {
          A(row, t * n + i) += B.J[t](r, j);
          A(row, t * n + j) -= B.J[t](r, i);
        }
        if (r == j) A(row, 3 * n + i) += 1.0;
        if (r == i) A(row, 3 * n + j) -= 1.0;
        b(row) = T.comp[r](i, j);
      }
  const Eigen::VectorXd x = A.colPivHouseholderQr().solve(b);
  return (A * x - b).lpNorm<Eigen::Infinity>();
}

}  // namespace

IntegrabilityReport quaternionicity_witness(const PqStructure& H,
                                            const std::vector<Point>& samples,
                                            double tol) {
  if (samples.empty()) throw Error("hypothesis region empty");
  IntegrabilityReport rep;
  rep.samples = samples;
  const int n = H.chart.dim();
  const TangentPairs pairs = tangent_pairs(n, kPairCount, kPairSeed);

  const VectorTwoForm TP = torsion_TP(H);
  std::vector<double> res(samples.size(), 0.0);
  par::for_index(static_cast<int>(samples.size()), [&](int k) {
    const auto kz = static_cast<std::size_t>(k);
    res[kz] = pair_residual(TP.table_at(samples[kz]), pairs);
  });
  double worst = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    worst = std::max(worst, res[k]);
    rep.add(make_check("span torsion sample " + std::to_string(k), res[k], tol));
  }
  rep.add(make_check("span torsion max", worst, tol));
  const bool flat = worst <= tol;
  rep.classification = flat ? "para-quaternionic" : "not para-quaternionic";

  if (!flat) {
    const VectorTwoForm TH = torsion_TH(H);
    const double defect =
        par::max_index(static_cast<int>(samples.size()), [&](int k) {
          const Point& p = samples[static_cast<std::size_t>(k)];
          return delta_realization_defect(basis_at(H, p), TH.table_at(p));
        });
    rep.add(measure_check("delta realization defect", defect,
                          "least-squares obstruction to writing the basis torsion as "
                          "delta of span-plus-identity valued forms"));
  }
  return rep;
}

// --- admissible samples for the diagonal family -----------------------------

std::vector<Point> propo_admissible_samples(int m, const std::string& h,
                                            const std::vector<Point>& candidates) {
  const Chart c = Chart::standard(m);
  const std::vector<ScalarExpr> f = propo_f(m, h);

  ScalarExpr Sx = ScalarExpr::constant(0.0), Sy = ScalarExpr::constant(0.0);
  for (int j = 2; j <= 2 * m; ++j) {
    Sx = Sx + c.var(c.x_index(j)).pow(2);
    Sy = Sy + c.var(c.y_index(j)).pow(2);
  }
  const ScalarExpr S = Sx / Sy;
  const FunctionDef& def = function_lookup(h);
  ScalarExpr slope = apply_function(h, S);
  if (def.derivative) slope = slope + S * apply_function(*def.derivative, S);

  std::vector<Point> keep;
  for (const Point& p : candidates) {
    bool ok = true;
    try {
      if (std::abs(evaluate(Sx, p)) < kMargin || std::abs(evaluate(Sy, p)) < kMargin)
        ok = false;
      for (int j = 2; ok && j <= 2 * m; ++j)
        if (std::abs(p.v.at(c.y_index(j))) < kMargin) ok = false;
      for (const ScalarExpr& fi : f)
        if (ok && std::abs(evaluate(fi, p)) < kMargin) ok = false;
      if (ok && std::abs(evaluate(slope, p)) < kMargin) ok = false;
    } catch (const Error&) {
      ok = false;
    }
    if (ok) keep.push_back(p);
  }
  return keep;
}

}  // namespace pq
