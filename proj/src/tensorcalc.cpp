#include "pq/tensorcalc.hpp"

#include <cmath>
#include <utility>

namespace pq {

namespace {

int table_index(int n, int k, int i, int j) { return (k * n + i) * n + j; }

// d[(l n + r) n + c] = d_l A^r_c, one DiffCache per coordinate.
std::vector<ScalarExpr> entry_derivatives(const EndomorphismField& A) {
  const int n = A.chart.dim();
  std::vector<ScalarExpr> d(static_cast<std::size_t>(n) * n * n);
  for (int l = 0; l < n; ++l) {
    DiffCache dl(A.chart.coords[l]);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) d[table_index(n, l, r, c)] = dl(A.at(r, c));
  }
  return d;
}

// alphaJ[i][c] = sum_a alpha_a J_i(a, c), the composition alpha o J_i.
std::array<std::vector<ScalarExpr>, 3> alpha_compositions(const PqStructure& H,
                                                          const OneForm& alpha) {
  const int n = H.chart.dim();
  std::array<std::vector<ScalarExpr>, 3> out;
  for (int i = 0; i < 3; ++i) {
    out[i].resize(n);
    for (int c = 0; c < n; ++c) {
      ScalarExpr acc;
      for (int a = 0; a < n; ++a) acc = acc + alpha.comp[a] * H.J[i].at(a, c);
      out[i][c] = acc;
    }
  }
  return out;
}

}  // namespace

TwoFormValue TwoFormValue::zero(int n) {
  TwoFormValue v;
  v.comp.assign(n, Eigen::MatrixXd::Zero(n, n));
  return v;
}

Eigen::VectorXd TwoFormValue::value(const Eigen::VectorXd& X,
                                    const Eigen::VectorXd& Y) const {
  const int n = dim();
  Eigen::VectorXd out(n);
  for (int k = 0; k < n; ++k) out[k] = X.dot(comp[k] * Y);
  return out;
}

Eigen::MatrixXd TwoFormValue::slice(const Eigen::VectorXd& X) const {
  const int n = dim();
  Eigen::MatrixXd M(n, n);
  for (int k = 0; k < n; ++k) M.row(k) = X.transpose() * comp[k];
  return M;
}

double TwoFormValue::norm() const {
  double m = 0.0;
  for (const Eigen::MatrixXd& c : comp)
    m = std::max(m, c.cwiseAbs().maxCoeff());
  return m;
}

double TwoFormValue::alternating_residual() const {
  double m = 0.0;
  for (const Eigen::MatrixXd& c : comp)
    m = std::max(m, (c + c.transpose()).cwiseAbs().maxCoeff());
  return m;
}

TwoFormValue operator+(const TwoFormValue& A, const TwoFormValue& B) {
  TwoFormValue out = A;
  for (int k = 0; k < out.dim(); ++k) out.comp[k] += B.comp[k];
  return out;
}

TwoFormValue operator-(const TwoFormValue& A, const TwoFormValue& B) {
  TwoFormValue out = A;
  for (int k = 0; k < out.dim(); ++k) out.comp[k] -= B.comp[k];
  return out;
}

TwoFormValue operator*(double s, const TwoFormValue& B) {
  TwoFormValue out = B;
  for (Eigen::MatrixXd& c : out.comp) c *= s;
  return out;
}

TwoFormValue compose(const Eigen::MatrixXd& A, const TwoFormValue& B) {
  const int n = B.dim();
  TwoFormValue out = TwoFormValue::zero(n);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l)
      if (A(k, l) != 0.0) out.comp[k] += A(k, l) * B.comp[l];
  return out;
}

TwoFormValue pull(const TwoFormValue& B, const Eigen::MatrixXd& A,
                  const Eigen::MatrixXd& C) {
  TwoFormValue out = B;
  for (int k = 0; k < out.dim(); ++k)
    out.comp[k] = A.transpose() * B.comp[k] * C;
  return out;
}

EndoOneFormValue EndoOneFormValue::zero(int n) {
  EndoOneFormValue v;
  v.a.assign(n, Eigen::MatrixXd::Zero(n, n));
  return v;
}

Eigen::MatrixXd EndoOneFormValue::value(const Eigen::VectorXd& X) const {
  const int n = dim();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    if (X[i] != 0.0) M += X[i] * a[i];
  return M;
}

double EndoOneFormValue::norm() const {
  double m = 0.0;
  for (const Eigen::MatrixXd& c : a) m = std::max(m, c.cwiseAbs().maxCoeff());
  return m;
}

EndoOneFormValue operator+(const EndoOneFormValue& A, const EndoOneFormValue& B) {
  EndoOneFormValue out = A;
  for (int i = 0; i < out.dim(); ++i) out.a[i] += B.a[i];
  return out;
}

EndoOneFormValue operator-(const EndoOneFormValue& A, const EndoOneFormValue& B) {
  EndoOneFormValue out = A;
  for (int i = 0; i < out.dim(); ++i) out.a[i] -= B.a[i];
  return out;
}

BasisValue basis_at(const PqStructure& H, const Point& p) {
  EvalCache cache(p);
  return BasisValue{{H.J[0].eval(cache), H.J[1].eval(cache), H.J[2].eval(cache)}};
}

TwoFormValue pi02_value(const TwoFormValue& T, const Eigen::MatrixXd& J, int eps) {
  const int n = T.dim();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  TwoFormValue mixed = compose(J, pull(T, J, I) + pull(T, I, J));
  return 0.25 * (T + static_cast<double>(eps) * (pull(T, J, J) - mixed));
}

TwoFormValue projector_value(const TwoFormValue& T, const BasisValue& B) {
  TwoFormValue acc = pi02_value(T, B.J[0], PqStructure::eps[0]);
  acc = acc + pi02_value(T, B.J[1], PqStructure::eps[1]);
  acc = acc + pi02_value(T, B.J[2], PqStructure::eps[2]);
  return (2.0 / 3.0) * acc;
}

EndoOneFormValue pi_section_value(const TwoFormValue& T, const BasisValue& B) {
  const int n = T.dim();
  const auto& eps = PqStructure::eps;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  TwoFormValue acc = 0.25 * T;
  for (int i = 0; i < 3; ++i) {
    acc = acc + (0.25 * eps[i]) * compose(B.J[i], pull(T, I, B.J[i]));
    acc = acc - (eps[i] / 12.0) * compose(B.J[i], pull(T, B.J[i], I));
    for (int j = 0; j < 3; ++j)
      acc = acc - (eps[i] * eps[j] / 12.0) *
                      compose(B.J[j] * B.J[i], pull(T, B.J[i], B.J[j]));
  }
  EndoOneFormValue out = EndoOneFormValue::zero(n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j) out.a[i](k, j) = acc.comp[k](i, j);
  return out;
}

TwoFormValue delta_value(const EndoOneFormValue& eta) {
  const int n = eta.dim();
  TwoFormValue out = TwoFormValue::zero(n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        out.comp[k](i, j) = eta.a[i](k, j) - eta.a[j](k, i);
  return out;
}

EndoOneFormValue p_valued_form(const std::array<Eigen::VectorXd, 3>& beta,
                               const BasisValue& B) {
  const int n = B.n();
  EndoOneFormValue out = EndoOneFormValue::zero(n);
  for (int i = 0; i < n; ++i)
    for (int m = 0; m < 3; ++m) out.a[i] += beta[m][i] * B.J[m];
  return out;
}

std::array<Eigen::VectorXd, 3> trace_forms(const TwoFormValue& T,
                                           const BasisValue& B) {
  const int n = T.dim();
  std::array<Eigen::VectorXd, 3> out;
  for (int i = 0; i < 3; ++i) out[i] = Eigen::VectorXd::Zero(n);
  for (int k = 0; k < n; ++k) {
    // M(r, j) = T(e_k, e_j)^r
    Eigen::MatrixXd M(n, n);
    for (int r = 0; r < n; ++r) M.row(r) = T.comp[r].row(k);
    for (int i = 0; i < 3; ++i)
      out[i][k] = PqStructure::eps[i] * (B.J[i] * M).trace() / (n - 2);
  }
  return out;
}

TwoFormValue tp_value(const TwoFormValue& T, const BasisValue& B) {
  return T - delta_value(p_valued_form(trace_forms(T, B), B));
}

double centralizer_residual(const Eigen::MatrixXd& A, const BasisValue& B) {
  double m = 0.0;
  for (int i = 0; i < 3; ++i)
    m = std::max(m, (A * B.J[i] - B.J[i] * A).cwiseAbs().maxCoeff());
  return m;
}

double normalizer_residual(const Eigen::MatrixXd& A, const BasisValue& B) {
  const int n = B.n();
  Eigen::MatrixXd span(n * n, 3);
  for (int i = 0; i < 3; ++i)
    span.col(i) = Eigen::Map<const Eigen::VectorXd>(B.J[i].data(), n * n);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(span);
  double m = 0.0;
  for (int i = 0; i < 3; ++i) {
    Eigen::MatrixXd C = A * B.J[i] - B.J[i] * A;
    Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(C.data(), n * n);
    Eigen::VectorXd x = qr.solve(b);
    m = std::max(m, (span * x - b).cwiseAbs().maxCoeff());
  }
  return m;
}

TwoFormValue VectorTwoForm::table_at(const Point& p) const {
  if (has_table()) {
    const int n = chart.dim();
    EvalCache cache(p);
    TwoFormValue v = TwoFormValue::zero(n);
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          v.comp[k](i, j) = cache(tab[table_index(n, k, i, j)]);
    return v;
  }
  return eval_fn(p);
}

Eigen::VectorXd VectorTwoForm::value(const Point& p, const Eigen::VectorXd& X,
                                     const Eigen::VectorXd& Y) const {
  return table_at(p).value(X, Y);
}

VectorTwoForm VectorTwoForm::zero(const Chart& c) {
  VectorTwoForm T;
  T.chart = c;
  T.tab.assign(static_cast<std::size_t>(c.dim()) * c.dim() * c.dim(),
               ScalarExpr());
  return T;
}

EndoOneFormValue EndoValuedOneForm::table_at(const Point& p) const {
  if (has_table()) {
    const int n = chart.dim();
    EvalCache cache(p);
    EndoOneFormValue v = EndoOneFormValue::zero(n);
    for (int i = 0; i < n; ++i)
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
          v.a[i](r, c) = cache(tab[table_index(n, i, r, c)]);
    return v;
  }
  return eval_fn(p);
}

Eigen::MatrixXd EndoValuedOneForm::value(const Point& p,
                                         const Eigen::VectorXd& X) const {
  return table_at(p).value(X);
}

EndoValuedOneForm EndoValuedOneForm::zero(const Chart& c) {
  EndoValuedOneForm f;
  f.chart = c;
  f.tab.assign(static_cast<std::size_t>(c.dim()) * c.dim() * c.dim(),
               ScalarExpr());
  return f;
}

VectorField lie_bracket(const VectorField& X, const VectorField& Y) {
  const Chart& c = X.chart;
  const int n = c.dim();
  std::vector<ScalarExpr> comp(n);
  for (int l = 0; l < n; ++l) {
    DiffCache dl(c.coords[l]);
    for (int k = 0; k < n; ++k)
      comp[k] = comp[k] + X.comp[l] * dl(Y.comp[k]) - Y.comp[l] * dl(X.comp[k]);
  }
  VectorField out;
  out.chart = c;
  out.comp = std::move(comp);
  return out;
}

VectorTwoForm nijenhuis(const EndomorphismField& J, int eps) {
  if (eps != 1 && eps != -1) throw Error("nijenhuis: eps must be +1 or -1");
  const Chart& c = J.chart;
  const int n = c.dim();
  std::vector<ScalarExpr> D = entry_derivatives(J);
  VectorTwoForm N = VectorTwoForm::zero(c);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        ScalarExpr acc;
        for (int l = 0; l < n; ++l) {
          acc = acc + J.at(l, i) * D[table_index(n, l, k, j)] -
                J.at(l, j) * D[table_index(n, l, k, i)] +
                J.at(k, l) * (D[table_index(n, j, l, i)] -
                              D[table_index(n, i, l, j)]);
        }
        N.tab[table_index(n, k, i, j)] = acc;
      }
  return N;
}

VectorTwoForm nijenhuis_bracket(const EndomorphismField& A,
                                const EndomorphismField& B) {
  const Chart& c = A.chart;
  const int n = c.dim();
  std::vector<ScalarExpr> DA = entry_derivatives(A);
  std::vector<ScalarExpr> DB = entry_derivatives(B);
  VectorTwoForm out = VectorTwoForm::zero(c);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        ScalarExpr acc;
        for (int l = 0; l < n; ++l) {
          acc = acc + A.at(l, i) * DB[table_index(n, l, k, j)] -
                B.at(l, j) * DA[table_index(n, l, k, i)] +
                B.at(l, i) * DA[table_index(n, l, k, j)] -
                A.at(l, j) * DB[table_index(n, l, k, i)] -
                A.at(k, l) * (DB[table_index(n, i, l, j)] -
                              DB[table_index(n, j, l, i)]) -
                B.at(k, l) * (DA[table_index(n, i, l, j)] -
                              DA[table_index(n, j, l, i)]);
        }
        out.tab[table_index(n, k, i, j)] = acc;
      }
  return out;
}

VectorTwoForm delta_map(const EndoValuedOneForm& eta) {
  VectorTwoForm out;
  out.chart = eta.chart;
  if (eta.has_table()) {
    const int n = eta.chart.dim();
    out.tab.resize(static_cast<std::size_t>(n) * n * n);
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          out.tab[table_index(n, k, i, j)] = eta.tab[table_index(n, i, k, j)] -
                                             eta.tab[table_index(n, j, k, i)];
    return out;
  }
  out.eval_fn = [eta](const Point& p) { return delta_value(eta.table_at(p)); };
  return out;
}

VectorTwoForm pi02(const EndomorphismField& J, int eps, const VectorTwoForm& T) {
  if (eps != 1 && eps != -1) throw Error("pi02: eps must be +1 or -1");
  VectorTwoForm out;
  out.chart = T.chart;
  out.eval_fn = [J, eps, T](const Point& p) {
    return pi02_value(T.table_at(p), J.eval(p), eps);
  };
  return out;
}

VectorTwoForm projector_P(const PqStructure& H, const VectorTwoForm& T) {
  VectorTwoForm out;
  out.chart = T.chart;
  out.eval_fn = [H, T](const Point& p) {
    return projector_value(T.table_at(p), basis_at(H, p));
  };
  return out;
}

EndoValuedOneForm pi_section(const PqStructure& H, const VectorTwoForm& T) {
  EndoValuedOneForm out;
  out.chart = T.chart;
  out.eval_fn = [H, T](const Point& p) {
    return pi_section_value(T.table_at(p), basis_at(H, p));
  };
  return out;
}

VectorTwoForm torsion_TH(const PqStructure& H) {
  VectorTwoForm TH = VectorTwoForm::zero(H.chart);
  for (int i = 0; i < 3; ++i) {
    VectorTwoForm N = nijenhuis(H.J[i], PqStructure::eps[i]);
    ScalarExpr coef = ScalarExpr::constant(-PqStructure::eps[i] / 6.0);
    for (std::size_t t = 0; t < TH.tab.size(); ++t)
      TH.tab[t] = TH.tab[t] + coef * N.tab[t];
  }
  return TH;
}

TauForms tau_forms(const PqStructure& H, const VectorTwoForm& T) {
  TauForms out;
  out.chart = T.chart;
  out.eval_fn = [H, T](const Point& p) {
    BasisValue B = basis_at(H, p);
    return trace_forms(projector_value(T.table_at(p), B), B);
  };
  return out;
}

VectorTwoForm torsion_TP(const PqStructure& H) {
  VectorTwoForm TH = torsion_TH(H);
  VectorTwoForm out;
  out.chart = H.chart;
  out.eval_fn = [H, TH](const Point& p) {
    return tp_value(TH.table_at(p), basis_at(H, p));
  };
  return out;
}

EndoValuedOneForm s_alpha(const PqStructure& H, const OneForm& alpha) {
  const int n = H.chart.dim();
  const auto& eps = PqStructure::eps;
  auto alphaJ = alpha_compositions(H, alpha);
  EndoValuedOneForm out = EndoValuedOneForm::zero(H.chart);
  for (int x = 0; x < n; ++x)
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        ScalarExpr acc;
        if (r == x) acc = acc + alpha.comp[c];
        if (r == c) acc = acc + alpha.comp[x];
        for (int i = 0; i < 3; ++i) {
          ScalarExpr si = ScalarExpr::constant(eps[i]);
          acc = acc + si * alphaJ[i][c] * H.J[i].at(r, x) +
                si * alphaJ[i][x] * H.J[i].at(r, c);
        }
        out.tab[table_index(n, x, r, c)] = acc;
      }
  return out;
}

EndoValuedOneForm t_alpha(const PqStructure& H, const OneForm& alpha) {
  const int n = H.chart.dim();
  const auto& eps = PqStructure::eps;
  auto alphaJ = alpha_compositions(H, alpha);
  EndoValuedOneForm out = EndoValuedOneForm::zero(H.chart);
  for (int x = 0; x < n; ++x)
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        ScalarExpr acc;
        for (int i = 0; i < 3; ++i)
          acc = acc +
                ScalarExpr::constant(eps[i]) * alphaJ[i][x] * H.J[i].at(r, c);
        out.tab[table_index(n, x, r, c)] = acc;
      }
  return out;
}

EndoValuedOneForm e_alpha(const PqStructure& H, const OneForm& alpha) {
  const int n = H.chart.dim();
  const auto& eps = PqStructure::eps;
  auto alphaJ = alpha_compositions(H, alpha);
  EndoValuedOneForm out = EndoValuedOneForm::zero(H.chart);
  for (int x = 0; x < n; ++x)
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        ScalarExpr acc;
        if (r == x) acc = acc + alpha.comp[c];
        if (r == c) acc = acc + alpha.comp[x];
        for (int i = 0; i < 3; ++i)
          acc = acc +
                ScalarExpr::constant(eps[i]) * alphaJ[i][c] * H.J[i].at(r, x);
        out.tab[table_index(n, x, r, c)] = -acc;
      }
  return out;
}

double centralizer_residual(const Eigen::MatrixXd& A, const PqStructure& H,
                            const Point& p) {
  return centralizer_residual(A, basis_at(H, p));
}

double normalizer_residual(const Eigen::MatrixXd& A, const PqStructure& H,
                           const Point& p) {
  return normalizer_residual(A, basis_at(H, p));
}

}  // namespace pq
