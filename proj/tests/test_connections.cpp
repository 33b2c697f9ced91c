#include "doctest.h"
#include "helpers.hpp"

#include <pq/connections.hpp>
#include <pq/geometry.hpp>
#include <pq/tensorcalc.hpp>

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <random>

using pq::BasisValue;
using pq::ConnectionJet;
using pq::EndoOneFormValue;
using pq::PqStructure;
using pq::SolveMode;
using pq::TwoFormValue;

namespace {

const std::array<int, 3>& eps() { return PqStructure::eps; }

double jet_gap(const ConnectionJet& a, const ConnectionJet& b) {
  double r = 0.0;
  for (int k = 0; k < a.dim(); ++k)
    r = std::max(r, (a.gamma[k] - b.gamma[k]).cwiseAbs().maxCoeff());
  return r;
}

pq::OneForm random_constant_form(std::mt19937_64& rng, const pq::Chart& c) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Eigen::VectorXd v(c.dim());
  for (int k = 0; k < c.dim(); ++k) v[k] = d(rng);
  return pq::OneForm::constant(c, v);
}

}  // namespace

TEST_CASE("solve_preserving: flat model with zero target gives the zero jet") {
  PqStructure H = pq::flat_model(2);
  pq::Point p = H.chart.point({0.3, -0.2, 0.7, 1.1, -0.4, 0.9, 0.1, -0.8});
  TwoFormValue zero = TwoFormValue::zero(H.chart.dim());
  for (SolveMode mode : {SolveMode::Factored, SolveMode::Reference}) {
    ConnectionJet jet = pq::solve_preserving(H, p, zero, mode);
    double g = 0.0;
    for (const auto& m : jet.gamma) g = std::max(g, m.cwiseAbs().maxCoeff());
    CHECK(g <= 1e-12);
    CHECK(jet.preserve_residual() <= 1e-12);
  }
  ConnectionJet m0 = pq::minimal(H, p, pq::OneForm::zero(H.chart));
  double g = 0.0;
  for (const auto& m : m0.gamma) g = std::max(g, m.cwiseAbs().maxCoeff());
  CHECK(g <= 1e-12);
}

TEST_CASE("obata: defining equations, uniqueness across solver routes") {
  PqStructure H = pq::conjugated_flat_structure(2, 211);
  pq::VectorTwoForm TH = pq::torsion_TH(H);
  std::vector<pq::Point> pts = pq::sample_box(H.chart, -1.0, 1.0, 2, 53);
  for (const pq::Point& p : pts) {
    ConnectionJet fast = pq::obata(H, p);
    CHECK(fast.preserve_residual() <= 1e-9);
    CHECK((fast.torsion() - TH.table_at(p)).norm() <= 1e-9);
    CHECK(fast.solve_residual <= 1e-9);

    ConnectionJet ref = pq::obata(H, p, SolveMode::Reference);
    CHECK(jet_gap(fast, ref) <= 1e-8);

    ConnectionJet shuffled =
        pq::solve_preserving(H, p, TH.table_at(p), SolveMode::Reference, 999);
    CHECK(jet_gap(ref, shuffled) <= 1e-8);
  }
}

TEST_CASE("solve_preserving: reachable shifted targets and honest failure") {
  PqStructure H = pq::conjugated_flat_structure(2, 221);
  std::mt19937_64 rng(2121);
  pq::Point p = pqtest::random_point(rng, H.chart, -1.0, 1.0);
  pq::VectorTwoForm TH = pq::torsion_TH(H);

  // Shifting the target by delta of a centralizer-valued form stays
  // reachable and still preserves every J_i.
  pq::OneForm alpha = random_constant_form(rng, H.chart);
  EndoOneFormValue Ev = pq::e_alpha(H, alpha).table_at(p);
  TwoFormValue target = TH.table_at(p) + pq::delta_value(Ev);
  ConnectionJet jet = pq::solve_preserving(H, p, target);
  CHECK(jet.preserve_residual() <= 1e-9);
  CHECK((jet.torsion() - target).norm() <= 1e-9);

  // Any J_i-preserving jet satisfies Pi^{0,2}_{J_i}(torsion) = -(eps_i/4) N_i.
  BasisValue B = pq::basis_at(H, p);
  TwoFormValue T = jet.torsion();
  for (int i = 0; i < 3; ++i) {
    TwoFormValue Ni = pq::nijenhuis(H.J[i], eps()[i]).table_at(p);
    TwoFormValue lhs = pq::pi02_value(T, B.J[i], eps()[i]);
    CHECK((lhs - (-eps()[i] / 4.0) * Ni).norm() <= 1e-8);
  }

  // T^P differs from T^H by a span-valued delta image, which no jet
  // preserving all three J_i can reach; the solver must say so.
  pq::VectorTwoForm TP = pq::torsion_TP(H);
  REQUIRE((TH.table_at(p) - TP.table_at(p)).norm() > 1e-3);
  CHECK_THROWS_AS(pq::solve_preserving(H, p, TP.table_at(p)), pq::Error);
  CHECK_THROWS_AS(
      pq::solve_preserving(H, p, TP.table_at(p), SolveMode::Reference),
      pq::Error);
}

TEST_CASE("solve_preserving_only: torsion projects onto the closed form") {
  // The preservation-only jet never sees the torsion formula, so P of its
  // torsion recovering -(1/6) sum eps_i N_i is an independent derivation.
  for (std::uint64_t seed : {231ull, 232ull}) {
    PqStructure H = pq::conjugated_flat_structure(2, seed);
    pq::VectorTwoForm TH = pq::torsion_TH(H);
    std::vector<pq::Point> pts = pq::sample_box(H.chart, -1.0, 1.0, 2, seed);
    for (const pq::Point& p : pts) {
      ConnectionJet jet = pq::solve_preserving_only(H, p);
      CHECK(jet.preserve_residual() <= 1e-9);
      TwoFormValue PT = pq::projector_value(jet.torsion(), pq::basis_at(H, p));
      CHECK((PT - TH.table_at(p)).norm() <= 1e-8);
    }
  }
}

TEST_CASE("minimal: one torsion for the whole family") {
  PqStructure H = pq::conjugated_flat_structure(2, 241);
  pq::VectorTwoForm TP = pq::torsion_TP(H);
  std::mt19937_64 rng(2424);
  pq::Point p = pqtest::random_point(rng, H.chart, -1.0, 1.0);
  TwoFormValue want = TP.table_at(p);

  ConnectionJet base = pq::minimal(H, p, pq::OneForm::zero(H.chart));
  // The Obata route preserves each J_i; the minimal shift gives that up
  // and keeps only the span.
  CHECK(base.span_residual() <= 1e-9);
  CHECK(base.preserve_residual() > 1e-3);

  for (int rep = 0; rep < 5; ++rep) {
    pq::OneForm alpha = random_constant_form(rng, H.chart);
    ConnectionJet jet = pq::minimal(H, p, alpha);
    CHECK((jet.torsion() - want).norm() <= 1e-8);
    CHECK(jet.span_residual() <= 1e-9);
  }
}

TEST_CASE("span-preserving jets: P(torsion) lands on T^P modulo delta") {
  PqStructure H = pq::conjugated_flat_structure(2, 251);
  std::mt19937_64 rng(2525);
  pq::Point p = pqtest::random_point(rng, H.chart, -1.0, 1.0);
  const int n = H.chart.dim();
  BasisValue B = pq::basis_at(H, p);

  // A generic span-preserving jet: minimal shifted inside Z(P) + P + S^alpha.
  ConnectionJet jet = pq::minimal(H, p, random_constant_form(rng, H.chart));
  EndoOneFormValue zshift =
      pq::e_alpha(H, random_constant_form(rng, H.chart)).table_at(p);
  std::array<Eigen::VectorXd, 3> gamma;
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (auto& g : gamma) {
    g = Eigen::VectorXd(n);
    for (int k = 0; k < n; ++k) g[k] = d(rng);
  }
  jet = jet.shifted(zshift).shifted(pq::p_valued_form(gamma, B));
  REQUIRE(jet.span_residual() <= 1e-9);

  TwoFormValue PT = pq::projector_value(jet.torsion(), B);
  TwoFormValue TPp = pq::torsion_TP(H).table_at(p);

  // Direct route: the trace correction collapses P(torsion) onto T^P.
  CHECK((pq::tp_value(PT, B) - TPp).norm() <= 1e-8);

  // Least-squares route: P(torsion) - T^P is delta of a span-valued form.
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n * n * (n - 1) / 2, 3 * n);
  Eigen::VectorXd b(n * n * (n - 1) / 2);
  TwoFormValue diff = PT - TPp;
  int row = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = 0; k < n; ++k, ++row) {
        for (int m = 0; m < 3; ++m)
          for (int x = 0; x < n; ++x) {
            // delta(sum_m c_m (x) J_m)(e_i, e_j)^k.
            double coef = 0.0;
            if (x == i) coef += B.J[m](k, j);
            if (x == j) coef -= B.J[m](k, i);
            A(row, m * n + x) += coef;
          }
        b[row] = diff.comp[k](i, j);
      }
  Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
  CHECK((A * c - b).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("nijenhuis bracket reconstruction from preserved torsion") {
  PqStructure H = pq::conjugated_flat_structure(2, 261);
  const int n = H.chart.dim();
  std::vector<pq::Point> pts = pq::sample_box(H.chart, -1.0, 1.0, 2, 59);
  auto pairs = pq::tangent_pairs(n, 16, 61);
  for (const pq::Point& p : pts) {
    ConnectionJet jet = pq::obata(H, p);
    TwoFormValue T = jet.torsion();
    for (int a = 0; a < 3; ++a)
      for (int bidx = 0; bidx < 3; ++bidx) {
        const Eigen::MatrixXd& A = jet.jets.J[a];
        const Eigen::MatrixXd& Bm = jet.jets.J[bidx];
        pq::VectorTwoForm br = pq::nijenhuis_bracket(H.J[a], H.J[bidx]);
        TwoFormValue brv = br.table_at(p);
        // The last term vanishes for anticommuting pairs; for A = B it is
        // what reconciles the reconstruction with [J, J] = 2 N_J.
        for (const auto& [X, Y] : pairs) {
          Eigen::VectorXd rhs = A * (T.value(Bm * X, Y) + T.value(X, Bm * Y)) +
                                Bm * (T.value(X, A * Y) + T.value(A * X, Y)) -
                                T.value(A * X, Bm * Y) - T.value(Bm * X, A * Y) -
                                (A * Bm + Bm * A) * T.value(X, Y);
          CHECK((brv.value(X, Y) - rhs).cwiseAbs().maxCoeff() <= 1e-8);
        }
      }
  }
}

TEST_CASE("fiber_form: span coefficients and the (-,+,+) skew invariant") {
  // Flat minimal connection: nothing moves.
  PqStructure F = pq::flat_model(2);
  pq::Point q = F.chart.point({0.2, 0.4, -0.3, 0.8, 1.0, -0.5, 0.6, 0.1});
  pq::FiberConnectionForm wf =
      pq::fiber_form(pq::minimal(F, q, pq::OneForm::zero(F.chart)), F);
  for (const auto& w : wf.omega) CHECK(w.cwiseAbs().maxCoeff() <= 1e-12);

  PqStructure H = pq::conjugated_flat_structure(2, 271);
  std::mt19937_64 rng(2727);
  pq::Point p = pqtest::random_point(rng, H.chart, -1.0, 1.0);
  ConnectionJet jet = pq::obata(H, p);
  pq::FiberConnectionForm w = pq::fiber_form(jet, H);
  CHECK(w.projection_residual <= 1e-9);
  CHECK(w.so12_residual() <= 1e-9);

  // Reconstruction: nabla_k J_i = sum_j omega_k(j,i) J_j.
  for (int k = 0; k < jet.dim(); ++k)
    for (int i = 0; i < 3; ++i) {
      Eigen::MatrixXd rec = Eigen::MatrixXd::Zero(jet.dim(), jet.dim());
      for (int j = 0; j < 3; ++j) rec += w.omega[k](j, i) * jet.jets.J[j];
      CHECK((jet.nabla_J(k, i) - rec).cwiseAbs().maxCoeff() <= 1e-9);
    }

  // An S^alpha shift moves omega but keeps it in so(1,2).
  pq::OneForm alpha = random_constant_form(rng, H.chart);
  ConnectionJet m0 = pq::minimal(H, p, pq::OneForm::zero(H.chart));
  ConnectionJet ma = pq::minimal(H, p, alpha);
  pq::FiberConnectionForm w0 = pq::fiber_form(m0, H);
  pq::FiberConnectionForm wa = pq::fiber_form(ma, H);
  CHECK(wa.so12_residual() <= 1e-9);
  double moved = 0.0;
  for (int k = 0; k < jet.dim(); ++k)
    moved = std::max(moved, (wa.omega[k] - w0.omega[k]).cwiseAbs().maxCoeff());
  CHECK(moved > 1e-6);

  // A jet that ignores the structure does not project onto the span.
  ConnectionJet raw = jet;
  for (auto& g : raw.gamma) g.setZero();
  CHECK_THROWS_AS(pq::fiber_form(raw, H), pq::Error);
}
