#include "doctest.h"
#include "helpers.hpp"

#include <pq/integrability.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

using pq::CheckResult;
using pq::CompatibleStructure;
using pq::IntegrabilityReport;
using pq::PqStructure;
using pq::Verdict;

namespace {

// Diagonal family on R^{4m}: J1 dx_i = f_i dy_i, J1 dy_i = -(1/f_i) dx_i,
// J2 = +Id on x / -Id on y. Admissible for any nonvanishing f.
PqStructure diag_family(int m, const std::vector<pq::ScalarExpr>& f) {
  pq::Chart c = pq::Chart::standard(m);
  pq::EndomorphismField J1 = pq::EndomorphismField::zero(c);
  pq::EndomorphismField J2 = pq::EndomorphismField::zero(c);
  for (int i = 1; i <= 2 * m; ++i) {
    const int xi = c.x_index(i), yi = c.y_index(i);
    J1.at(yi, xi) = f[i - 1];
    J1.at(xi, yi) = pq::ScalarExpr::constant(-1.0) / f[i - 1];
    J2.at(xi, xi) = pq::ScalarExpr::constant(1.0);
    J2.at(yi, yi) = pq::ScalarExpr::constant(-1.0);
  }
  pq::EndomorphismField J3 = J1 * J2;
  return PqStructure{c, {J1, J2, J3}};
}

std::vector<pq::Point> propo_points(int count, std::uint64_t seed) {
  const pq::Chart c = pq::Chart::standard(2);
  return pq::propo_admissible_samples(2, "const1",
                                      pq::sample_box(c, 0.4, 1.6, count, seed));
}

const CheckResult& named(const IntegrabilityReport& rep, std::string_view name) {
  const CheckResult* c = rep.find(name);
  REQUIRE(c != nullptr);
  return *c;
}

}  // namespace

TEST_CASE("report plumbing: verdict aggregation, skips, lookup") {
  IntegrabilityReport rep;
  rep.add(pq::make_check("a", 1e-12, 1e-8));
  rep.add(pq::skip_check("b", "off"));
  rep.add(pq::measure_check("c", 7.0, "measured"));
  CHECK(rep.pass());
  CHECK(rep.max_residual() == doctest::Approx(1e-12));
  rep.add(pq::make_check("d", 2.0, 1e-8));
  CHECK_FALSE(rep.pass());
  CHECK(named(rep, "c").verdict == Verdict::Skip);
  CHECK(rep.find("missing") == nullptr);
  CHECK(pq::to_string(Verdict::Fail) == "fail");
}

TEST_CASE("compatible sections: sign deduction and unit residuals") {
  CHECK(CompatibleStructure::constant(0, 1, 0).sign == 1);
  CHECK(CompatibleStructure::constant(1, 0, 0).sign == -1);
  const double u = 0.37;
  CHECK(CompatibleStructure::constant(std::sinh(u), std::cosh(u), 0).sign == 1);
  CHECK_THROWS_AS(CompatibleStructure::constant(0.5, 0, 0), pq::Error);
  CHECK_THROWS_AS(
      pq::compatible_section(pq::ScalarExpr::constant(0), pq::ScalarExpr::constant(1),
                             pq::ScalarExpr::constant(0), 2),
      pq::Error);

  const pq::Chart c = pq::Chart::standard(2);
  const pq::ScalarExpr E = pq::exp(pq::ScalarExpr::constant(0.3) * c.var(0));
  const pq::ScalarExpr half = pq::ScalarExpr::constant(0.5);
  const CompatibleStructure boost = pq::compatible_section(
      half * (E - pq::ScalarExpr::constant(1.0) / E),
      half * (E + pq::ScalarExpr::constant(1.0) / E), pq::ScalarExpr::constant(0.0), 1);
  for (const pq::Point& p : pq::sample_box(c, 0.4, 1.6, 4, 11))
    CHECK(boost.unit_residual(p) <= 1e-12);
}

TEST_CASE("is_integrable: constant sections of the flat model") {
  PqStructure H = pq::flat_model(2);
  std::vector<pq::Point> pts = pq::sample_box(H.chart, -1.0, 1.0, 3, 29);

  for (const CompatibleStructure& A :
       {CompatibleStructure::constant(0, 1, 0), CompatibleStructure::constant(1, 0, 0),
        CompatibleStructure::constant(std::sinh(0.7), 0, std::cosh(0.7))}) {
    IntegrabilityReport rep = pq::is_integrable(H, A, pts, 1e-10);
    CHECK(rep.pass());
    CHECK(rep.classification == "integrable");
    CHECK(named(rep, "nijenhuis max").residual <= 1e-12);
  }

  const CompatibleStructure bad = pq::compatible_section(
      H.chart.var(0), pq::ScalarExpr::constant(1.0), pq::ScalarExpr::constant(0.0), 1);
  CHECK_THROWS_WITH_AS(pq::is_integrable(H, bad, pts, 1e-10),
                       doctest::Contains("does not square"), pq::Error);
}

TEST_CASE("is_integrable: raw fields, sign deduction and failure modes") {
  PqStructure F = pq::flat_model(2);
  std::vector<pq::Point> pts = pq::sample_box(F.chart, -1.0, 1.0, 3, 31);
  CHECK(pq::is_integrable(F.J1(), pts, 1e-10).pass());
  CHECK(pq::is_integrable(F.J2(), pts, 1e-10).pass());

  PqStructure H = pq::conjugated_flat_structure(2, 101);
  IntegrabilityReport rep = pq::is_integrable(H.J1(), pts, 1e-8);
  CHECK_FALSE(rep.pass());
  CHECK(rep.classification == "not integrable");
  CHECK(named(rep, "nijenhuis max").residual > 1e-3);

  CHECK_THROWS_WITH_AS(pq::is_integrable(F.J1() + F.J2(), pts, 1e-8),
                       doctest::Contains("does not square"), pq::Error);
}

TEST_CASE("is_integrable: the rational family keeps its three sections") {
  PqStructure H = pq::propo_structure(2, "const1");
  std::vector<pq::Point> pts = propo_points(6, 43);
  REQUIRE(pts.size() >= 4);
  pts.resize(4);

  for (const CompatibleStructure& A :
       {CompatibleStructure::constant(0, 1, 0), CompatibleStructure::constant(1, 1, 1),
        CompatibleStructure::constant(1, 1, -1)}) {
    IntegrabilityReport rep = pq::is_integrable(H, A, pts, 1e-8);
    CHECK(rep.pass());
    CHECK(named(rep, "nijenhuis max").residual <= 1e-8);
  }
  // J1 itself is obstructed; the family is not para-hypercomplex.
  IntegrabilityReport j1 = pq::is_integrable(H, CompatibleStructure::constant(1, 0, 0),
                                             pts, 1e-8);
  CHECK_FALSE(j1.pass());
  CHECK(named(j1, "nijenhuis max").residual > 1e-3);
}

TEST_CASE("involutive: coordinate spans, the graph distribution, rank drops") {
  const pq::Chart c = pq::Chart::standard(2);
  std::vector<pq::Point> pts = pq::sample_box(c, 0.4, 1.6, 3, 17);

  std::vector<pq::VectorField> coords{pq::VectorField::coordinate(c, 0),
                                      pq::VectorField::coordinate(c, 1)};
  IntegrabilityReport rep = pq::involutive(coords, pts, 1e-12);
  CHECK(rep.pass());
  CHECK(rep.classification == "involutive");

  // Graph frame X_i = d/dx_i + f_i d/dy_i of the rational family.
  std::vector<pq::ScalarExpr> f = pq::propo_f(2, "const1");
  std::vector<pq::VectorField> graph;
  for (int i = 1; i <= 4; ++i) {
    pq::VectorField X = pq::VectorField::coordinate(c, c.x_index(i));
    X.comp[c.y_index(i)] = f[i - 1];
    graph.push_back(X);
  }
  std::vector<pq::Point> apts = propo_points(5, 19);
  REQUIRE(apts.size() >= 3);
  CHECK(pq::involutive(graph, apts, 1e-9).pass());

  std::vector<pq::VectorField> broken = graph;
  broken[1].comp[c.y_index(2)] = f[1] + pq::ScalarExpr::constant(0.2) * c.var(c.x_index(3));
  IntegrabilityReport bad = pq::involutive(broken, apts, 1e-9);
  CHECK_FALSE(bad.pass());
  CHECK(named(bad, "bracket span max").residual > 1e-3);
  CHECK(bad.classification == "not involutive");

  // Overcomplete frames are fine as long as the rank is stable.
  std::vector<pq::VectorField> redundant = coords;
  redundant.push_back(pq::VectorField::coordinate(c, 0));
  CHECK(pq::involutive(redundant, pts, 1e-12).pass());

  pq::VectorField scaled = pq::VectorField::zero(c);
  scaled.comp[1] = c.var(0) - pq::ScalarExpr::constant(1.0);
  std::vector<pq::VectorField> dropping{pq::VectorField::coordinate(c, 0), scaled};
  std::vector<pq::Point> mixed{c.point({1.0, 1, 1, 1, 1, 1, 1, 1}),
                               c.point({1.5, 1, 1, 1, 1, 1, 1, 1})};
  CHECK_THROWS_WITH_AS(pq::involutive(dropping, mixed, 1e-9),
                       doctest::Contains("rank"), pq::Error);
}

TEST_CASE("pde_residual: solutions of the overdetermined system and a defect") {
  const pq::Chart c = pq::Chart::standard(2);
  const pq::Point p = c.point({1.1, 0.7, 1.3, 0.6, 0.9, 1.2, 0.8, 1.4});

  std::vector<pq::ScalarExpr> ones(4, pq::ScalarExpr::constant(1.0));
  CHECK(pq::pde_residual(c, pq::diagonal_matrix(ones), p) == doctest::Approx(0.0));

  for (const char* h : {"const1", "id"}) {
    auto f = pq::diagonal_matrix(pq::propo_f(2, h));
    for (const pq::Point& q : propo_points(4, 61))
      CHECK(pq::pde_residual(c, f, q) <= 1e-10);
  }

  auto broken = pq::propo_f(2, "const1");
  broken[0] = broken[0] + c.var(c.x_index(2));
  double r = pq::pde_residual(c, pq::diagonal_matrix(broken), p);
  CHECK(r > 1e-3);

  std::vector<pq::ScalarExpr> singular = ones;
  singular[2] = pq::ScalarExpr::constant(0.0);
  CHECK_THROWS_WITH_AS(pq::pde_residual(c, pq::diagonal_matrix(singular), p),
                       doctest::Contains("singular"), pq::Error);
  CHECK_THROWS_AS(pq::pde_residual(c, {{pq::ScalarExpr::constant(1.0)}}, p), pq::Error);
}

TEST_CASE("propo_admissible_samples: margins and an empty hypothesis region") {
  const pq::Chart c = pq::Chart::standard(2);
  std::vector<pq::Point> box = pq::sample_box(c, 0.4, 1.6, 24, 7);
  std::vector<pq::Point> keep = pq::propo_admissible_samples(2, "const1", box);
  CHECK(keep.size() >= 20);

  // Points on the singular locus y_2 = 0 are rejected.
  std::vector<pq::Point> sing{c.point({1, 1, 1, 1, 1, 0, 1, 1})};
  CHECK(pq::propo_admissible_samples(2, "const1", sing).empty());

  // h(s) = 1/s has h(s) + s h'(s) = 0 identically: no admissible points.
  if (!pq::function_registered("inv")) {
    pq::register_function("neg_inv_sq", [](double s) { return -1.0 / (s * s); }, {});
    pq::register_function("inv", [](double s) { return 1.0 / s; }, "neg_inv_sq");
  }
  CHECK(pq::propo_admissible_samples(2, "inv", box).empty());
}

TEST_CASE("baze_normal_form: frozen dependent and independent triples") {
  PqStructure H = pq::flat_model(2);
  const pq::Point p = H.chart.point({0.2, -0.5, 1.0, 0.3, 0.8, -0.1, 0.6, 1.2});

  SUBCASE("dependent triple lands on the a = 2, q = 1 normal form") {
    pq::BazeNormalForm nf = pq::baze_normal_form(
        H,
        {CompatibleStructure::constant(0, 1, 0), CompatibleStructure::constant(1, -1, 1),
         CompatibleStructure::constant(2, 1, 2)},
        p);
    CHECK(nf.classification == "degenerate spans, dependent triple");
    CHECK(nf.a == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(nf.q == 1);
    CHECK(nf.reconstruction_residual <= 1e-12);
    CHECK((nf.basis_coeff[0] - Eigen::Vector3d(1, 0, 0)).norm() <= 1e-12);
    CHECK((nf.basis_coeff[1] - Eigen::Vector3d(0, 1, 0)).norm() <= 1e-12);
    CHECK((nf.basis_coeff[2] - Eigen::Vector3d(0, 0, 1)).norm() <= 1e-12);
    for (int k = 0; k < 3; ++k)
      CHECK((nf.basis[k] - H.J[k].eval(p)).cwiseAbs().maxCoeff() <= 1e-12);
  }

  SUBCASE("independent triple recovers the standard basis") {
    pq::BazeNormalForm nf = pq::baze_normal_form(
        H,
        {CompatibleStructure::constant(0, 1, 0), CompatibleStructure::constant(1, 1, 1),
         CompatibleStructure::constant(1, 1, -1)},
        p);
    CHECK(nf.classification == "degenerate spans, independent triple");
    CHECK((nf.basis_coeff[0] - Eigen::Vector3d(1, 0, 0)).norm() <= 1e-12);
    CHECK((nf.basis_coeff[1] - Eigen::Vector3d(0, 1, 0)).norm() <= 1e-12);
    CHECK((nf.basis_coeff[2] - Eigen::Vector3d(0, 0, 1)).norm() <= 1e-12);
    CHECK(nf.reconstruction_residual <= 1e-12);
  }

  SUBCASE("pairs split by the Gram determinant of the span metric") {
    auto pair_class = [&](CompatibleStructure A, CompatibleStructure B) {
      return pq::baze_normal_form(H, {A, B}, p).classification;
    };
    CHECK(pair_class(CompatibleStructure::constant(0, 1, 0),
                     CompatibleStructure::constant(1, -1, 1)) == "pair span degenerate");
    CHECK(pair_class(CompatibleStructure::constant(1, 0, 0),
                     CompatibleStructure::constant(0, 1, 0)) ==
          "pair span non-degenerate");
  }

  SUBCASE("rejections") {
    CHECK_THROWS_WITH_AS(
        pq::baze_normal_form(H,
                             {CompatibleStructure::constant(0, 1, 0),
                              CompatibleStructure::constant(0, -1, 0)},
                             p),
        doctest::Contains("dependent inputs"), pq::Error);
    CHECK_THROWS_WITH_AS(
        pq::baze_normal_form(H,
                             {CompatibleStructure::constant(1, 0, 0),
                              CompatibleStructure::constant(0, 1, 0),
                              CompatibleStructure::constant(0, 0, 1)},
                             p),
        doctest::Contains("para-complex"), pq::Error);
    CHECK_THROWS_AS(pq::baze_normal_form(H, {CompatibleStructure::constant(0, 1, 0)}, p),
                    pq::Error);
  }

  SUBCASE("a triple with a non-degenerate pair is reported, not normalized") {
    const double r = std::sqrt(5.0);
    pq::BazeNormalForm nf = pq::baze_normal_form(
        H,
        {CompatibleStructure::constant(0, 1, 0), CompatibleStructure::constant(0, 0, 1),
         CompatibleStructure::constant(0, 1.0 / r, 2.0 / r)},
        p);
    CHECK(nf.classification == "triple with a non-degenerate span");
  }
}

TEST_CASE("baze_normal_form: scrambled inputs on a conjugated structure") {
  PqStructure H = pq::conjugated_flat_structure(2, 77);
  const pq::Point p = H.chart.point({0.4, 0.9, -0.3, 0.7, 1.1, 0.2, -0.6, 0.5});
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(8, 8);

  auto check_algebra = [&](const pq::BazeNormalForm& nf) {
    CHECK((nf.basis[0] * nf.basis[0] + id).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((nf.basis[1] * nf.basis[1] - id).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((nf.basis[2] * nf.basis[2] - id).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((nf.basis[0] * nf.basis[1] - nf.basis[2]).cwiseAbs().maxCoeff() <= 1e-9);
  };
  auto input_matrix = [&](const CompatibleStructure& A) {
    Eigen::Vector3d a = A.coeff_at(p);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(8, 8);
    for (int i = 0; i < 3; ++i) M += a(i) * H.J[i].eval(p);
    return M;
  };

  SUBCASE("dependent family") {
    std::vector<CompatibleStructure> I{CompatibleStructure::constant(-2, -1, -2),
                                       CompatibleStructure::constant(0, 1, 0),
                                       CompatibleStructure::constant(1, -1, 1)};
    pq::BazeNormalForm nf = pq::baze_normal_form(H, I, p);
    CHECK(nf.classification == "degenerate spans, dependent triple");
    CHECK(nf.reconstruction_residual <= 1e-9);
    check_algebra(nf);
    // The arranged inputs match their normal-form combinations as matrices.
    Eigen::MatrixXd v1 = nf.flip[0] * input_matrix(I[nf.order[0]]);
    Eigen::MatrixXd v2 = nf.flip[1] * input_matrix(I[nf.order[1]]);
    Eigen::MatrixXd v3 = nf.flip[2] * input_matrix(I[nf.order[2]]);
    CHECK((v1 - nf.basis[1]).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((v2 - (nf.basis[0] - nf.basis[1] + nf.q * nf.basis[2])).cwiseAbs().maxCoeff() <=
          1e-9);
    CHECK((v3 - (nf.a * nf.basis[0] + nf.basis[1] + nf.a * nf.q * nf.basis[2]))
              .cwiseAbs()
              .maxCoeff() <= 1e-9);
  }

  SUBCASE("independent family") {
    std::vector<CompatibleStructure> I{CompatibleStructure::constant(1, 1, 1),
                                       CompatibleStructure::constant(0, -1, 0),
                                       CompatibleStructure::constant(1, 1, -1)};
    pq::BazeNormalForm nf = pq::baze_normal_form(H, I, p);
    CHECK(nf.classification == "degenerate spans, independent triple");
    CHECK(nf.reconstruction_residual <= 1e-9);
    check_algebra(nf);
    Eigen::MatrixXd v1 = nf.flip[0] * input_matrix(I[nf.order[0]]);
    Eigen::MatrixXd v2 = nf.flip[1] * input_matrix(I[nf.order[1]]);
    Eigen::MatrixXd v3 = nf.flip[2] * input_matrix(I[nf.order[2]]);
    CHECK((v1 - nf.basis[1]).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((v2 - (nf.basis[0] + nf.basis[1] + nf.basis[2])).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((v3 - (nf.basis[0] + nf.basis[1] - nf.basis[2])).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("theorem_sug_classify: each hypothesis family and the rejection") {
  std::vector<pq::Point> flat_pts =
      pq::sample_box(pq::Chart::standard(2), -1.0, 1.0, 3, 23);

  SUBCASE("complex member") {
    PqStructure H = pq::flat_model(2);
    IntegrabilityReport rep = pq::theorem_sug_classify(
        H,
        {CompatibleStructure::constant(1, 0, 0), CompatibleStructure::constant(0, 1, 0)},
        flat_pts, 1e-8);
    CHECK(rep.classification == "independent pair with a complex member");
    CHECK(rep.pass());
    CHECK(named(rep, "span torsion").verdict == Verdict::Pass);
  }

  SUBCASE("complex member, coordinate pullback") {
    PqStructure H = pq::pullback_flat_structure(2, 59);
    IntegrabilityReport rep = pq::theorem_sug_classify(
        H,
        {CompatibleStructure::constant(1, 0, 0), CompatibleStructure::constant(0, 1, 0)},
        flat_pts, 1e-8);
    CHECK(rep.classification == "independent pair with a complex member");
    CHECK(named(rep, "span torsion").residual <= 1e-8);
    CHECK(rep.pass());
  }

  SUBCASE("para pair with non-degenerate span") {
    PqStructure H = pq::flat_model(2);
    IntegrabilityReport rep = pq::theorem_sug_classify(
        H,
        {CompatibleStructure::constant(0, 1, 0), CompatibleStructure::constant(0, 0, 1)},
        flat_pts, 1e-8);
    CHECK(rep.classification == "independent para pair, non-degenerate span");
    CHECK(rep.pass());
  }

  SUBCASE("dependent triple with degenerate spans") {
    PqStructure H = pq::flat_model(2);
    IntegrabilityReport rep = pq::theorem_sug_classify(
        H,
        {CompatibleStructure::constant(0, 1, 0), CompatibleStructure::constant(1, -1, 1),
         CompatibleStructure::constant(2, 1, 2)},
        flat_pts, 1e-8);
    CHECK(rep.classification == "dependent para triple, degenerate spans");
    CHECK(rep.pass());
  }

  SUBCASE("the rational family escapes every case") {
    PqStructure H = pq::propo_structure(2, "const1");
    std::vector<pq::Point> pts = propo_points(6, 37);
    REQUIRE(pts.size() >= 4);
    pts.resize(4);
    IntegrabilityReport rep = pq::theorem_sug_classify(
        H,
        {CompatibleStructure::constant(0, 1, 0), CompatibleStructure::constant(1, 1, 1),
         CompatibleStructure::constant(1, 1, -1)},
        pts, 1e-8);
    CHECK(rep.classification == "no case applies");
    CHECK(named(rep, "classification").note.find("pointwise independent") !=
          std::string::npos);
    const CheckResult& tp = named(rep, "span torsion");
    CHECK(tp.verdict == Verdict::Skip);
    CHECK(tp.residual > 1e-3);
    CHECK(rep.pass());
  }
}

TEST_CASE("lemma_pe_check: both sides agree on three families") {
  SUBCASE("flat model") {
    IntegrabilityReport rep = pq::lemma_pe_check(
        pq::flat_model(2), pq::sample_box(pq::Chart::standard(2), -1.0, 1.0, 3, 41),
        1e-9);
    CHECK(rep.pass());
    CHECK(rep.classification == "integrable triple");
    CHECK(named(rep, "verdict agreement").note == "left passes, right passes");
  }

  SUBCASE("rational family") {
    std::vector<pq::Point> pts = propo_points(5, 47);
    REQUIRE(pts.size() >= 3);
    pts.resize(3);
    IntegrabilityReport rep =
        pq::lemma_pe_check(pq::propo_structure(2, "const1"), pts, 1e-7);
    CHECK(rep.pass());
    CHECK(rep.classification == "integrable triple");
  }

  SUBCASE("broken graph distribution fails on both sides") {
    const pq::Chart c = pq::Chart::standard(2);
    auto f = pq::propo_f(2, "const1");
    f[1] = f[1] + pq::ScalarExpr::constant(0.2) * c.var(c.x_index(3));
    std::vector<pq::Point> pts = propo_points(5, 53);
    REQUIRE(pts.size() >= 3);
    pts.resize(3);
    IntegrabilityReport rep = pq::lemma_pe_check(diag_family(2, f), pts, 1e-7);
    CHECK(rep.classification == "obstructed triple");
    CHECK(named(rep, "verdict agreement").verdict == Verdict::Pass);
    CHECK(named(rep, "verdict agreement").note == "left fails, right fails");
    CHECK(named(rep, "nijenhuis J2").verdict == Verdict::Pass);
    CHECK(named(rep, "eigenbundle involutive").residual > 1e-3);
  }
}

TEST_CASE("quaternionicity_witness: vanishing and obstructed span torsion") {
  SUBCASE("flat and pullback structures pass") {
    std::vector<pq::Point> pts =
        pq::sample_box(pq::Chart::standard(2), -1.0, 1.0, 3, 67);
    for (PqStructure H : {pq::flat_model(2), pq::pullback_flat_structure(2, 71)}) {
      IntegrabilityReport rep = pq::quaternionicity_witness(H, pts, 1e-8);
      CHECK(rep.pass());
      CHECK(rep.classification == "para-quaternionic");
      CHECK(rep.find("delta realization defect") == nullptr);
    }
  }

  SUBCASE("the rational family fails at every admissible point") {
    PqStructure H = pq::propo_structure(2, "const1");
    std::vector<pq::Point> pts = propo_points(8, 73);
    REQUIRE(pts.size() >= 6);
    IntegrabilityReport rep = pq::quaternionicity_witness(H, pts, 1e-8);
    CHECK_FALSE(rep.pass());
    CHECK(rep.classification == "not para-quaternionic");
    for (std::size_t k = 0; k < pts.size(); ++k)
      CHECK(named(rep, "span torsion sample " + std::to_string(k)).residual > 1e-3);
    const CheckResult& defect = named(rep, "delta realization defect");
    CHECK(defect.verdict == Verdict::Skip);
    CHECK(defect.residual > 1e-3);
  }

  SUBCASE("empty sample set is a hypothesis failure, not a pass") {
    CHECK_THROWS_WITH_AS(pq::quaternionicity_witness(pq::flat_model(2), {}, 1e-8),
                         doctest::Contains("hypothesis region empty"), pq::Error);
  }
}

TEST_CASE("frozen values of the rational family at the all-ones point") {
  PqStructure H = pq::propo_structure(2, "const1");
  const pq::Chart& c = H.chart;
  const pq::Point ones = c.point(std::vector<double>(8, 1.0));
  const auto f = pq::propo_f(2, "const1");

  pq::TwoFormValue th = pq::torsion_TH(H).table_at(ones);
  Eigen::VectorXd e2 = Eigen::VectorXd::Zero(8), e3 = Eigen::VectorXd::Zero(8);
  e2(c.x_index(2)) = 1.0;
  e3(c.x_index(3)) = 1.0;
  Eigen::VectorXd expect = (2.0 / 9.0) * (e2 - e3);
  CHECK((th.value(e2, e3) - expect).lpNorm<Eigen::Infinity>() <= 1e-9);
  CHECK(th.norm() == doctest::Approx(2.0 / 9.0).epsilon(1e-9));
  CHECK(pq::torsion_TP(H).table_at(ones).norm() ==
        doctest::Approx(4.0 / 27.0).epsilon(1e-9));

  // 3 T^H(dx_i, dx_j) = (1/f_j)(df_j/dx_i) dx_j - (1/f_i)(df_i/dx_j) dx_i.
  std::vector<pq::Point> pts = propo_points(4, 79);
  pts.push_back(ones);
  for (const pq::Point& p : pts) {
    pq::TwoFormValue t = pq::torsion_TH(H).table_at(p);
    for (int i = 1; i <= 4; ++i)
      for (int j = 1; j <= 4; ++j) {
        if (i == j) continue;
        Eigen::VectorXd ei = Eigen::VectorXd::Zero(8), ej = Eigen::VectorXd::Zero(8);
        ei(c.x_index(i)) = 1.0;
        ej(c.x_index(j)) = 1.0;
        const double ci =
            pq::evaluate(pq::differentiate(f[j - 1], c.coords[c.x_index(i)]), p) /
            pq::evaluate(f[j - 1], p);
        const double cj =
            pq::evaluate(pq::differentiate(f[i - 1], c.coords[c.x_index(j)]), p) /
            pq::evaluate(f[i - 1], p);
        CHECK((3.0 * t.value(ei, ej) - (ci * ej - cj * ei)).lpNorm<Eigen::Infinity>() <=
              1e-9);
      }
  }
}

TEST_CASE("proof_identity_suite: flat structure satisfies everything") {
  PqStructure H = pq::flat_model(2);
  std::vector<pq::Point> pts = pq::sample_box(H.chart, -1.0, 1.0, 2, 83);

  pq::SpanSection sec{pq::ScalarExpr::constant(std::sinh(0.4)),
                      pq::ScalarExpr::constant(std::cosh(0.4))};
  IntegrabilityReport rep = pq::proof_identity_suite(H, pts, 1e-9, sec);
  CHECK(rep.pass());
  CHECK(rep.classification == "identities hold");
  for (const char* name :
       {"torsion from N2 (J1 integrable)", "torsion from N1 (J2 integrable)",
        "product integrability J1J2", "span relation full", "span relation rescaled"})
    CHECK(named(rep, name).verdict == Verdict::Pass);

  // A pure J2 section leaves nothing above the coefficient threshold.
  pq::SpanSection vertical{pq::ScalarExpr::constant(0.0), pq::ScalarExpr::constant(1.0)};
  IntegrabilityReport rep0 = pq::proof_identity_suite(H, pts, 1e-9, vertical);
  CHECK(rep0.pass());
  CHECK(named(rep0, "span relation rescaled").verdict == Verdict::Skip);
  CHECK(named(rep0, "span relation rescaled").note.find("coefficient threshold") !=
        std::string::npos);
  CHECK(named(rep0, "span relation full").verdict == Verdict::Pass);

  // A non-unit section disables the whole block.
  pq::SpanSection bad{H.chart.var(0), pq::ScalarExpr::constant(1.0)};
  IntegrabilityReport repb = pq::proof_identity_suite(H, pts, 1e-9, bad);
  CHECK(named(repb, "span relation full").verdict == Verdict::Skip);
  CHECK(named(repb, "span relation full").note.find("square") != std::string::npos);
}

TEST_CASE("proof_identity_suite: rational family exercises the J2 branch") {
  PqStructure H = pq::propo_structure(2, "const1");
  std::vector<pq::Point> pts = propo_points(5, 89);
  REQUIRE(pts.size() >= 3);
  pts.resize(3);

  IntegrabilityReport rep = pq::proof_identity_suite(H, pts, 1e-8);
  CHECK(rep.pass());

  // J2 is integrable, J1 is not: the N1-based reductions run, the N2-based
  // ones are skipped, and the data is genuinely nontrivial.
  CHECK(named(rep, "torsion from N1 (J2 integrable)").verdict == Verdict::Pass);
  CHECK(named(rep, "N3 from N1 (J2 integrable)").verdict == Verdict::Pass);
  CHECK(named(rep, "N1 from N3 (J2 integrable)").verdict == Verdict::Pass);
  for (const char* name : {"bracket J1J2 from N1 (J2 integrable)",
                           "bracket J1J3 from N1 (J2 integrable)",
                           "bracket J2J3 from N1 (J2 integrable)"})
    CHECK(named(rep, name).verdict == Verdict::Pass);
  CHECK(named(rep, "torsion from N2 (J1 integrable)").verdict == Verdict::Skip);
  CHECK(named(rep, "torsion from N2 (J1 integrable)").note.find("hypothesis unmet") !=
        std::string::npos);
  CHECK(named(rep, "product integrability J1J2").verdict == Verdict::Skip);

  CHECK(named(rep, "sum projection residual").residual <= 1e-7);
  CHECK(named(rep, "J3 fixed-point residual").residual <= 1e-7);
  CHECK(named(rep, "chain sum projection to J3 equivariance").verdict == Verdict::Pass);
  CHECK(named(rep, "chain J3 equivariance to J3 fixed point").verdict == Verdict::Pass);
}

TEST_CASE("proof_identity_suite: conjugated structures cover the other gates") {
  std::vector<pq::Point> pts = pq::sample_box(pq::Chart::standard(2), -0.8, 0.8, 2, 97);

  SUBCASE("conjugation commuting with J1 keeps the N2 reductions live") {
    PqStructure H = pq::conjugated_flat_structure(2, 103, pq::CommuteWith::J1);
    IntegrabilityReport rep = pq::proof_identity_suite(H, pts, 1e-8);
    CHECK(rep.pass());
    CHECK(named(rep, "torsion from N2 (J1 integrable)").verdict == Verdict::Pass);
    CHECK(named(rep, "N3 from N2 (J1 integrable)").verdict == Verdict::Pass);
    CHECK(named(rep, "bracket J1J2 from N2 (J1 integrable)").verdict == Verdict::Pass);
    CHECK(named(rep, "torsion from N1 (J2 integrable)").verdict == Verdict::Skip);
    CHECK(named(rep, "product integrability J2J3").verdict == Verdict::Skip);
    // The hypotheses are nontrivial: N2 does not vanish here.
    CHECK(named(rep, "J3 fixed-point residual").residual > 1e-3);
  }

  SUBCASE("generic conjugation leaves only the unconditional identities") {
    PqStructure H = pq::conjugated_flat_structure(2, 107);
    IntegrabilityReport rep = pq::proof_identity_suite(H, pts, 1e-8);
    CHECK(rep.pass());
    for (const char* name :
         {"nijenhuis shift J1", "nijenhuis shift J2", "nijenhuis shift J3",
          "product nijenhuis J1J2", "product nijenhuis J2J3", "product nijenhuis J1J3",
          "bracket via torsion J1,J2", "bracket via torsion J2,J3",
          "bracket via torsion J1,J1"})
      CHECK(named(rep, name).verdict == Verdict::Pass);
    CHECK(named(rep, "torsion from N2 (J1 integrable)").verdict == Verdict::Skip);
    CHECK(named(rep, "torsion from N1 (J2 integrable)").verdict == Verdict::Skip);
    CHECK(named(rep, "sum projection residual").residual > 1e-3);
  }
}
