#include "pq/connections.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace pq {
namespace {

constexpr double kUnreachableRel = 1e-7;

double max_abs(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

std::string format_residual(const char* what, double r) {
  std::ostringstream os;
  os << what << " (residual " << r << ")";
  return os.str();
}

Eigen::MatrixXd unvec(const Eigen::VectorXd& v, int n) {
  Eigen::MatrixXd M(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) M(r, c) = v[r * n + c];
  return M;
}

// Preservation operator L(M) = ([M, J_1]; [M, J_2]; [M, J_3]) as a
// 3n^2 x n^2 matrix over vec(M).
Eigen::MatrixXd preservation_operator(const std::array<Eigen::MatrixXd, 3>& J) {
  const int n = static_cast<int>(J[0].rows());
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(3 * n * n, n * n);
  for (int i = 0; i < 3; ++i)
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        const int row = (i * n + r) * n + c;
        for (int s = 0; s < n; ++s) {
          L(row, r * n + s) += J[i](s, c);
          L(row, s * n + c) -= J[i](r, s);
        }
      }
  return L;
}

ConnectionJet make_jet(const PqStructure& H, const Point& p) {
  ConnectionJet jet;
  jet.p = p;
  jet.jets = StructureJets(H).at(p);
  const int n = H.chart.dim();
  jet.gamma.assign(n, Eigen::MatrixXd::Zero(n, n));
  return jet;
}

ConnectionJet solve_reference(const PqStructure& H, const Point& p,
                              const TwoFormValue& target,
                              std::optional<std::uint64_t> shuffle_seed) {
  ConnectionJet jet = make_jet(H, p);
  const int n = jet.dim();
  const int unknowns = n * n * n;
  const int rows = 3 * n * n * n + n * (n * (n - 1) / 2);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, unknowns);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
  // Unknown layout: x[(k n + r) n + c] = Gamma_k(r, c).
  int row = 0;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < 3; ++i)
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c, ++row) {
          for (int s = 0; s < n; ++s) {
            A(row, (k * n + r) * n + s) += jet.jets.J[i](s, c);
            A(row, (k * n + s) * n + c) -= jet.jets.J[i](r, s);
          }
          b[row] = -jet.jets.dJ[i][k](r, c);
        }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = 0; k < n; ++k, ++row) {
        A(row, (i * n + k) * n + j) += 1.0;
        A(row, (j * n + k) * n + i) -= 1.0;
        b[row] = target.comp[k](i, j);
      }
  if (shuffle_seed) {
    std::vector<int> perm(rows);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd As(rows, unknowns);
    Eigen::VectorXd bs(rows);
    for (int r = 0; r < rows; ++r) {
      As.row(r) = A.row(perm[r]);
      bs[r] = b[perm[r]];
    }
    A.swap(As);
    b.swap(bs);
  }
  Eigen::VectorXd x = A.colPivHouseholderQr().solve(b);
  jet.solve_residual = (A * x - b).cwiseAbs().maxCoeff();
  if (jet.solve_residual > kUnreachableRel * (1.0 + b.cwiseAbs().maxCoeff()))
    throw Error(format_residual("target torsion unreachable", jet.solve_residual));
  for (int k = 0; k < n; ++k)
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) jet.gamma[k](r, c) = x[(k * n + r) * n + c];
  return jet;
}

struct FactoredPreservation {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd;
  Eigen::MatrixXd kernel;  // n^2 x (n^2/4) basis of the centralizer
  double feasibility = 0.0;

  explicit FactoredPreservation(const ConnectionJet& jet) {
    Eigen::MatrixXd L = preservation_operator(jet.jets.J);
    svd.compute(L, Eigen::ComputeThinU | Eigen::ComputeFullV);
    const int n2 = static_cast<int>(L.cols());
    const int kdim = n2 / 4;  // dim Z(P) = 4 m^2 = n^2 / 4
    const int rank = n2 - kdim;
    const Eigen::VectorXd& sv = svd.singularValues();
    if (sv[rank - 1] <= 1e-6 * sv[0] || sv[rank] >= 1e-8 * sv[0])
      throw Error(format_residual("centralizer dimension mismatch",
                                  sv[rank] / sv[0]));
    svd.setThreshold(1e-7);
    kernel = svd.matrixV().rightCols(kdim);
  }

  // Minimum-norm M with [M, J_i] = -rhs3[i]; feas accumulates the relative
  // residual of the three commutator equations.
  Eigen::MatrixXd particular(const std::array<Eigen::MatrixXd, 3>& J,
                             const std::array<Eigen::MatrixXd, 3>& rhs3,
                             double* feas) {
    const int n = static_cast<int>(J[0].rows());
    Eigen::VectorXd b(3 * n * n);
    for (int i = 0; i < 3; ++i)
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) b[(i * n + r) * n + c] = -rhs3[i](r, c);
    Eigen::MatrixXd M = unvec(svd.solve(b), n);
    double scale = 0.0, res = 0.0;
    for (int i = 0; i < 3; ++i) {
      res = std::max(res, max_abs(M * J[i] - J[i] * M + rhs3[i]));
      scale = std::max(scale, max_abs(rhs3[i]));
    }
    *feas = std::max(*feas, res / (1.0 + scale));
    return M;
  }
};

ConnectionJet solve_factored(const PqStructure& H, const Point& p,
                             const TwoFormValue& target) {
  ConnectionJet jet = make_jet(H, p);
  const int n = jet.dim();
  FactoredPreservation fp(jet);

  std::vector<Eigen::MatrixXd> part(n);
  double feas = 0.0;
  for (int k = 0; k < n; ++k) {
    std::array<Eigen::MatrixXd, 3> rhs{jet.jets.dJ[0][k], jet.jets.dJ[1][k],
                                       jet.jets.dJ[2][k]};
    part[k] = fp.particular(jet.jets.J, rhs, &feas);
  }
  if (feas > kUnreachableRel)
    throw Error(format_residual("structure span admits no preserving jet", feas));

  // Remaining freedom: Gamma_k = part_k + kernel * c_k. Torsion rows fix c.
  const int kdim = static_cast<int>(fp.kernel.cols());
  const int rows = n * (n * (n - 1) / 2);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, n * kdim);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
  int row = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = 0; k < n; ++k, ++row) {
        for (int a = 0; a < kdim; ++a) {
          A(row, i * kdim + a) += fp.kernel(k * n + j, a);
          A(row, j * kdim + a) -= fp.kernel(k * n + i, a);
        }
        b[row] = target.comp[k](i, j) - part[i](k, j) + part[j](k, i);
      }
  Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
  jet.solve_residual = rows ? (A * c - b).cwiseAbs().maxCoeff() : 0.0;
  if (jet.solve_residual > kUnreachableRel * (1.0 + b.cwiseAbs().maxCoeff()))
    throw Error(format_residual("target torsion unreachable", jet.solve_residual));
  for (int k = 0; k < n; ++k)
    jet.gamma[k] = part[k] + unvec(fp.kernel * c.segment(k * kdim, kdim), n);
  return jet;
}

}  // namespace

Eigen::MatrixXd ConnectionJet::nabla_J(int k, int i) const {
  return jets.dJ[i][k] + gamma[k] * jets.J[i] - jets.J[i] * gamma[k];
}

double ConnectionJet::preserve_residual() const {
  double r = 0.0;
  for (int k = 0; k < dim(); ++k)
    for (int i = 0; i < 3; ++i) r = std::max(r, max_abs(nabla_J(k, i)));
  return r;
}

double ConnectionJet::span_residual() const {
  const int n = dim();
  double r = 0.0;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < 3; ++i) {
      Eigen::MatrixXd A = nabla_J(k, i);
      Eigen::MatrixXd rem = A;
      for (int j = 0; j < 3; ++j)
        rem -= PqStructure::eps[j] * (jets.J[j] * A).trace() / n * jets.J[j];
      r = std::max(r, max_abs(rem));
    }
  return r;
}

TwoFormValue ConnectionJet::torsion() const {
  const int n = dim();
  TwoFormValue T = TwoFormValue::zero(n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        T.comp[k](i, j) = gamma[i](k, j) - gamma[j](k, i);
  return T;
}

ConnectionJet ConnectionJet::shifted(const EndoOneFormValue& eta) const {
  ConnectionJet out = *this;
  for (int k = 0; k < dim(); ++k) out.gamma[k] += eta.a[k];
  return out;
}

ConnectionJet solve_preserving(const PqStructure& H, const Point& p,
                               const TwoFormValue& target, SolveMode mode,
                               std::optional<std::uint64_t> shuffle_seed) {
  if (mode == SolveMode::Reference || shuffle_seed)
    return solve_reference(H, p, target, shuffle_seed);
  return solve_factored(H, p, target);
}

ConnectionJet solve_preserving_only(const PqStructure& H, const Point& p) {
  ConnectionJet jet = make_jet(H, p);
  const int n = jet.dim();
  FactoredPreservation fp(jet);
  double feas = 0.0;
  for (int k = 0; k < n; ++k) {
    std::array<Eigen::MatrixXd, 3> rhs{jet.jets.dJ[0][k], jet.jets.dJ[1][k],
                                       jet.jets.dJ[2][k]};
    jet.gamma[k] = fp.particular(jet.jets.J, rhs, &feas);
  }
  jet.solve_residual = feas;
  if (feas > kUnreachableRel)
    throw Error(format_residual("structure span admits no preserving jet", feas));
  return jet;
}

ConnectionJet obata(const PqStructure& H, const Point& p, SolveMode mode) {
  return solve_preserving(H, p, torsion_TH(H).table_at(p), mode);
}

ConnectionJet minimal(const PqStructure& H, const Point& p,
                      const OneForm& alpha, SolveMode mode) {
  ConnectionJet jet = obata(H, p, mode);
  BasisValue B{jet.jets.J};
  auto tau = trace_forms(jet.torsion(), B);
  EndoOneFormValue shift = p_valued_form(tau, B);
  for (auto& m : shift.a) m = (-m).eval();
  return jet.shifted(shift).shifted(s_alpha(H, alpha).table_at(p));
}

double FiberConnectionForm::so12_residual() const {
  Eigen::Matrix3d S = Eigen::Vector3d(-1.0, 1.0, 1.0).asDiagonal();
  double r = 0.0;
  for (const Eigen::Matrix3d& w : omega)
    r = std::max(r, max_abs(w.transpose() * S + S * w));
  return r;
}

FiberConnectionForm fiber_form(const ConnectionJet& c, const PqStructure& H) {
  const int n = c.dim();
  if (n != H.chart.dim()) throw Error("fiber_form: chart dimension mismatch");
  FiberConnectionForm out;
  out.omega.assign(n, Eigen::Matrix3d::Zero());
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < 3; ++i) {
      Eigen::MatrixXd A = c.nabla_J(k, i);
      Eigen::MatrixXd rem = A;
      for (int j = 0; j < 3; ++j) {
        double w = PqStructure::eps[j] * (c.jets.J[j] * A).trace() / n;
        out.omega[k](j, i) = w;
        rem -= w * c.jets.J[j];
      }
      out.projection_residual = std::max(out.projection_residual, max_abs(rem));
    }
  if (out.projection_residual > 1e-6)
    throw Error(format_residual("connection does not preserve the structure span",
                                out.projection_residual));
  return out;
}

}  // namespace pq
