// Calculus of tangent-valued two-forms on a chart: Lie and Nijenhuis
// brackets, the linear torsion map delta, the projector family Pi^{0,2},
// the projector P with its section pi, the torsion tensors T^H and T^P,
// trace one-forms, and the alpha-parametrized tensors S, T, E.
//
// Two layers. The *value* layer works on plain Eigen tables at one point
// and carries all the algebra. The *field* layer pairs a chart with either
// a closed-form component table (differentiation-based primitives) or a
// pointwise evaluator (projector-algebra composites), so composite
// operators never grow symbolic expression DAGs.
#ifndef PQ_TENSORCALC_HPP
#define PQ_TENSORCALC_HPP

#include "expr.hpp"
#include "geometry.hpp"

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <vector>

namespace pq {

// Vector-valued bilinear form at a point: comp[k](i,j) = B(e_i, e_j)^k.
struct TwoFormValue {
  std::vector<Eigen::MatrixXd> comp;

  static TwoFormValue zero(int n);
  int dim() const { return static_cast<int>(comp.size()); }
  Eigen::VectorXd value(const Eigen::VectorXd& X, const Eigen::VectorXd& Y) const;
  // Interior product B_X = B(X, .) as a matrix with rows k, columns j.
  Eigen::MatrixXd slice(const Eigen::VectorXd& X) const;
  double norm() const;                  // max absolute component
  double alternating_residual() const;  // max |B(e_i,e_j) + B(e_j,e_i)|
};

TwoFormValue operator+(const TwoFormValue& A, const TwoFormValue& B);
TwoFormValue operator-(const TwoFormValue& A, const TwoFormValue& B);
TwoFormValue operator*(double s, const TwoFormValue& B);

// A applied to the values: (A . B)(X,Y) = A(B(X,Y)).
TwoFormValue compose(const Eigen::MatrixXd& A, const TwoFormValue& B);
// Arguments precomposed: (X,Y) -> B(AX, CY).
TwoFormValue pull(const TwoFormValue& B, const Eigen::MatrixXd& A,
                  const Eigen::MatrixXd& C);

// Endomorphism-valued one-form at a point: a[i] = value on e_i.
struct EndoOneFormValue {
  std::vector<Eigen::MatrixXd> a;

  static EndoOneFormValue zero(int n);
  int dim() const { return static_cast<int>(a.size()); }
  Eigen::MatrixXd value(const Eigen::VectorXd& X) const;
  double norm() const;
};

EndoOneFormValue operator+(const EndoOneFormValue& A, const EndoOneFormValue& B);
EndoOneFormValue operator-(const EndoOneFormValue& A, const EndoOneFormValue& B);

// Admissible basis evaluated at a point, J = (J1, J2, J3), eps = (-1,+1,+1).
struct BasisValue {
  std::array<Eigen::MatrixXd, 3> J;

  int n() const { return static_cast<int>(J[0].rows()); }
};
BasisValue basis_at(const PqStructure& H, const Point& p);

// Pointwise operators. pi02_value needs J^2 = eps Id; projector_value,
// pi_section_value, trace_forms and tp_value need an admissible basis.
TwoFormValue pi02_value(const TwoFormValue& T, const Eigen::MatrixXd& J, int eps);
TwoFormValue projector_value(const TwoFormValue& T, const BasisValue& B);
EndoOneFormValue pi_section_value(const TwoFormValue& T, const BasisValue& B);
TwoFormValue delta_value(const EndoOneFormValue& eta);
// The P-valued one-form sum_i beta_i (x) J_i from covector components.
EndoOneFormValue p_valued_form(const std::array<Eigen::VectorXd, 3>& beta,
                               const BasisValue& B);
// Trace one-forms of an arbitrary table: component k of form i equals
// eps_i tr(J_i T_{e_k}) / (n - 2).
std::array<Eigen::VectorXd, 3> trace_forms(const TwoFormValue& T,
                                           const BasisValue& B);
// T - delta(sum_i trace_forms_i (x) J_i); lands in C(N(P)) for T in Im(P).
TwoFormValue tp_value(const TwoFormValue& T, const BasisValue& B);

double centralizer_residual(const Eigen::MatrixXd& A, const BasisValue& B);
double normalizer_residual(const Eigen::MatrixXd& A, const BasisValue& B);

// Tangent-valued two-form field. Either a closed-form table with entries
// tab[(k n + i) n + j] = T^k_{ij}, or an evaluator producing the full
// pointwise table.
struct VectorTwoForm {
  Chart chart;
  std::vector<ScalarExpr> tab;
  std::function<TwoFormValue(const Point&)> eval_fn;

  bool has_table() const { return !tab.empty(); }
  TwoFormValue table_at(const Point& p) const;
  Eigen::VectorXd value(const Point& p, const Eigen::VectorXd& X,
                        const Eigen::VectorXd& Y) const;
  static VectorTwoForm zero(const Chart& c);
};

// Endomorphism-valued one-form field, tab[(i n + r) n + c] = (eta(e_i))^r_c.
struct EndoValuedOneForm {
  Chart chart;
  std::vector<ScalarExpr> tab;
  std::function<EndoOneFormValue(const Point&)> eval_fn;

  bool has_table() const { return !tab.empty(); }
  EndoOneFormValue table_at(const Point& p) const;
  Eigen::MatrixXd value(const Point& p, const Eigen::VectorXd& X) const;
  static EndoValuedOneForm zero(const Chart& c);
};

// [X, Y]^k = X^l d_l Y^k - Y^l d_l X^k.
VectorField lie_bracket(const VectorField& X, const VectorField& Y);

// Nijenhuis tensor of J with J^2 = eps Id,
//   N_J(X,Y) = eps [X,Y] + [JX,JY] - J([JX,Y] + [X,JY]).
// The closed-form table is the evaluation on coordinate fields; eps enters
// the four-bracket form only through non-coordinate arguments and is kept
// as a documented precondition, not a table ingredient.
VectorTwoForm nijenhuis(const EndomorphismField& J, int eps);

// Symmetric Nijenhuis bracket of two endomorphism fields; [J, J] = 2 N_J.
VectorTwoForm nijenhuis_bracket(const EndomorphismField& A,
                                const EndomorphismField& B);

// (delta eta)(X,Y) = eta(X) Y - eta(Y) X.
VectorTwoForm delta_map(const EndoValuedOneForm& eta);

// Pi^{0,2}_J(T)(X,Y) = (1/4){T(X,Y) + eps T(JX,JY) - eps J(T(JX,Y) + T(X,JY))}.
VectorTwoForm pi02(const EndomorphismField& J, int eps, const VectorTwoForm& T);

// P(T) = (2/3) sum_i Pi^{0,2}_{J_i}(T).
VectorTwoForm projector_P(const PqStructure& H, const VectorTwoForm& T);

// Section pi of P with delta(pi(T)) = T - P(T); values commute with all J_i.
EndoValuedOneForm pi_section(const PqStructure& H, const VectorTwoForm& T);

// T^H = -(1/6) sum_i eps_i N_{J_i}; closed-form table.
VectorTwoForm torsion_TH(const PqStructure& H);

// One-forms tau_i(X) = eps_i tr(J_i P(T)_X) / (n - 2).
struct TauForms {
  Chart chart;
  std::function<std::array<Eigen::VectorXd, 3>(const Point&)> eval_fn;

  std::array<Eigen::VectorXd, 3> at(const Point& p) const { return eval_fn(p); }
};
TauForms tau_forms(const PqStructure& H, const VectorTwoForm& T);

// T^P = T^H - delta(sum_i tau_i (x) J_i), the part of T^H in C(N(P)).
VectorTwoForm torsion_TP(const PqStructure& H);

// S^alpha_X(Y) = alpha(Y)X + sum_i eps_i alpha(J_iY) J_iX
//              + alpha(X)Y + sum_i eps_i alpha(J_iX) J_iY.
EndoValuedOneForm s_alpha(const PqStructure& H, const OneForm& alpha);

// T^alpha = sum_i eps_i (alpha o J_i) (x) J_i.
EndoValuedOneForm t_alpha(const PqStructure& H, const OneForm& alpha);

// E^alpha(X,Y) = -(alpha(Y)X + sum_i eps_i alpha(J_iY) J_iX + alpha(X)Y);
// centralizer-valued, with delta(E^alpha) = delta(T^alpha).
EndoValuedOneForm e_alpha(const PqStructure& H, const OneForm& alpha);

double centralizer_residual(const Eigen::MatrixXd& A, const PqStructure& H,
                            const Point& p);
double normalizer_residual(const Eigen::MatrixXd& A, const PqStructure& H,
                           const Point& p);

}  // namespace pq

#endif
